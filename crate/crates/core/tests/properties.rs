mod common;

use common::*;

#[test]
fn p_laplacian_columns_sum_to_zero() {
    prop_column_sums(200).unwrap();
}

#[test]
fn rhs_is_permutation_equivariant() {
    prop_permutation(200).unwrap();
}

#[test]
fn rhs_is_translation_invariant() {
    prop_translation(200).unwrap();
}

#[test]
fn rhs_is_odd() {
    prop_odd_symmetry(200).unwrap();
}

#[test]
fn velocities_stay_in_uniform_bounds() {
    prop_uniform_bounds(200).unwrap();
}

#[test]
fn entrywise_norms_are_sandwiched() {
    prop_norm_sandwich(200).unwrap();
}

#[test]
fn regular_weight_dominates_its_lower_bound() {
    prop_weight_lower_bound(50).unwrap();
}
