pub mod bits;
pub mod galois;
pub mod inner_code;
pub mod rs_decoding;
pub mod rm_ldc;
pub mod channel;
pub mod stream_model;
pub mod enc;
pub mod dec_linear;
pub mod dec_general;
pub mod harness;
pub mod selftest;
pub mod cli;
