mod embed;
mod evaluate;
mod pool;
mod report;
mod run;
mod stats;
mod validate;

pub use embed::cmd_embed;
pub use evaluate::cmd_evaluate;
pub use pool::cmd_build_pool;
pub use report::cmd_report;
pub use run::cmd_run;
pub use stats::cmd_stats;
pub use validate::cmd_validate;
