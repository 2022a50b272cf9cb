pub mod calibrate;
pub mod classify;
pub mod fetch_pubmed;
pub mod ingest;
pub mod qagen;
pub mod verify;

mod common;
