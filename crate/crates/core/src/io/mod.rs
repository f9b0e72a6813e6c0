//! File formats, preprocessing entry points, metrics, visualization, and the
//! command line interface.

mod color;

pub use color::{class_color, flow_to_color, labels_to_color, RgbImage};
