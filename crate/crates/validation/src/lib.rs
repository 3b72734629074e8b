//! Holds the `acceptance` test target. Run it with
//! `cargo test -p secretary-validation --test acceptance`, optionally followed
//! by `-- <criterion numbers>`.
