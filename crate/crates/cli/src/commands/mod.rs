//! One module per subcommand. Each exposes a clap `Args` struct and a
//! `run(&Args) -> CliResult<()>` that does all validation itself, so exit
//! codes stay consistent regardless of how the binary was invoked.

pub mod convert;
pub mod cpm_solve;
pub mod evaluate;
pub mod plot_data;
pub mod simulate;
pub mod train_student;
pub mod train_teacher;

use std::collections::BTreeMap;
use std::path::Path;

/// Render manifest args from `(key, value)` pairs, skipping absent values.
pub(crate) fn manifest_args<'a>(
    pairs: impl IntoIterator<Item = (&'a str, Option<String>)>,
) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
}

pub(crate) fn path_string(path: &Path) -> String {
    path.display().to_string()
}
