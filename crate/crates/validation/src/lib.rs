//! Holds no code. The acceptance checks live in `tests/acceptance.rs` and run
//! with `cargo test -p uav-relay-validation --test acceptance`.
