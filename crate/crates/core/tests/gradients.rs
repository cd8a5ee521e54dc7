mod common;

use common::*;

const INSTANCES: usize = 100;
const TOL: f64 = 1e-4;

#[test]
fn cfm_matches_finite_differences() {
    let e = cfm_suite(INSTANCES, 1);
    assert!(e < TOL, "max rel err {e:e}");
}

#[test]
fn wcfm_matches_finite_differences() {
    let e = wcfm_suite(INSTANCES, 2);
    assert!(e < TOL, "max rel err {e:e}");
}

#[test]
fn vgl_matches_finite_differences() {
    let e = vgl_suite(INSTANCES, 3);
    assert!(e < TOL, "max rel err {e:e}");
}

#[test]
fn kl_matches_finite_differences() {
    let e = kl_suite(INSTANCES, 4);
    assert!(e < TOL, "max rel err {e:e}");
}

#[test]
fn network_backward_matches_finite_differences() {
    let e = model_suite(INSTANCES, 5);
    assert!(e < TOL, "max rel err {e:e}");
}

#[test]
fn auxiliary_objective_matches_finite_differences() {
    let e = aux_suite(INSTANCES, 6);
    assert!(e < TOL, "max rel err {e:e}");
}

#[test]
fn flow_objective_matches_finite_differences() {
    let e = flow_suite(INSTANCES, 7);
    assert!(e < TOL, "max rel err {e:e}");
}
