//! `congest simulate`: generate the scripted dataset with collision labels.

use congest_core::graph::build_graph_sequence;
use congest_core::sim::{generate_dataset, label_collisions};

use crate::formats::{self, GraphRecord, LabelRecord};
use crate::manifest::{self, CommonArgs, Manifest};
use crate::CliResult;

/// Generate scenes of every scripted scenario kind, label collisions, and
/// write `dataset.jsonl` + `labels.jsonl`.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct Args {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Also dump every per-frame interaction graph to graphs.jsonl.
    #[arg(long)]
    pub dump_graphs: bool,
}

pub fn run(args: &Args) -> CliResult<()> {
    let resolved = manifest::resolve("simulate", &args.common)?;
    let cfg = &resolved.config;
    // A flag recorded in the manifest keeps reproductions complete even
    // when the re-run omits --dump-graphs.
    let dump_graphs = args.dump_graphs
        || resolved.manifest_args.get("dump_graphs").map(String::as_str) == Some("true");
    let out = manifest::out_dir(&args.common)?;

    let dataset = generate_dataset(&cfg.counts(), &cfg.sim_config(), cfg.seed)?;
    let mut labels = Vec::with_capacity(dataset.len());
    let mut event_total = 0usize;
    for scene in dataset.scenes() {
        let label = label_collisions(scene, cfg.d_col)?;
        event_total += label.events.len();
        labels.push(LabelRecord::new(&scene.scene_id, &label));
    }

    formats::write_scenes(&out.join("dataset.jsonl"), dataset.scenes())?;
    formats::write_labels(&out.join("labels.jsonl"), &labels)?;
    if dump_graphs {
        let mut records = Vec::new();
        for scene in dataset.scenes() {
            let graphs = build_graph_sequence(scene, cfg.w_max)?;
            for (idx, graph) in graphs.iter().enumerate() {
                records.push(GraphRecord {
                    scene_id: scene.scene_id.clone(),
                    t: idx + 1,
                    weights: graph.weights().to_vec(),
                });
            }
        }
        formats::write_graphs(&out.join("graphs.jsonl"), &records)?;
    }

    let margs = super::manifest_args([(
        "dump_graphs",
        dump_graphs.then(|| "true".to_string()),
    )]);
    Manifest::new("simulate", cfg, margs).write(out)?;

    println!(
        "simulate: {} scenes ({} collision events) -> {}",
        dataset.len(),
        event_total,
        out.display()
    );
    Ok(())
}
