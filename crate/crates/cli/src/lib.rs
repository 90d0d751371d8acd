//! Configuration, orchestration and reporting for the `classforget` tool.

pub mod config;
pub mod pipeline;
pub mod plot;

use classforget_core::error::Category;
use classforget_core::Error;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CHECKPOINT: i32 = 4;
pub const EXIT_MASK: i32 = 5;
pub const EXIT_GATES: i32 = 6;

pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        Category::Config => EXIT_CONFIG,
        Category::Data => EXIT_DATA,
        Category::Checkpoint => EXIT_CHECKPOINT,
        Category::Mask => EXIT_MASK,
        Category::Other => EXIT_OTHER,
    }
}
