//! Holds the `acceptance` test target, which runs after the unit and
//! integration tests of the other crates. Run it alone with
//! `cargo test -p otreg-validation --test acceptance`.
