pub mod arch;
pub mod bench;
pub mod compare;
pub mod decode;
pub mod saccade;
pub mod scene;
