pub mod approx_async;
pub mod broadcast;
pub mod exact_sync;
pub mod geom;
pub mod model;
pub mod restricted;
pub mod scenario;
pub mod simnet;
pub mod wire;
