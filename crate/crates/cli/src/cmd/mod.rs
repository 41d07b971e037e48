pub mod align;
pub mod calibrate;
pub mod compose;
pub mod decode;
pub mod exec_sim;
pub mod fit_linkage;
pub mod gen_fixtures;
pub mod gen_stream;
pub mod optimize;
pub mod report;
