pub mod contracts;
pub mod coverage;
pub mod dsl;
pub mod interp;
pub mod iron;
pub mod kernel;
pub mod mediator;
pub mod reduction;
pub mod temporal;
pub mod traversal;
