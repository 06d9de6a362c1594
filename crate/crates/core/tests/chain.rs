mod common;

use common::*;
use elastic_ds::synthetic::{rotation_about_z, shifted};
use elastic_ds::{
    recover_gmm, solve_constrained_edit, transform_chain, EigenScaling, ElasticChain, Error,
    GaussianComponent, GeometricDescriptor, OrderedGmm, Pose,
};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;

fn descriptor_variant(chain: &ElasticChain, which: u8, pose_a: Pose, pose_b: Pose) -> GeometricDescriptor {
    let m = chain.joints().len();
    match which {
        0 => GeometricDescriptor::new(Some(pose_a), None).unwrap(),
        1 => GeometricDescriptor::new(None, Some(pose_b)).unwrap(),
        _ if m >= 4 => GeometricDescriptor::both(pose_a, pose_b).unwrap(),
        _ => GeometricDescriptor::new(Some(pose_a), None).unwrap(),
    }
}

#[test]
fn edit_matches_dense_kkt_oracle_on_random_chains() {
    let mut rng = rng(7);
    let mut checked = 0;
    for case in 0..100 {
        let d = if case % 3 == 0 { 3 } else { 2 };
        let m = 3 + case % 9; // N = m - 1 ∈ [2, 10]
        let joints = random_joints(&mut rng, d, m);
        let a = random_pose(&mut rng, d);
        let b = random_pose(&mut rng, d);
        let (start, end) = match case % 3 {
            0 => (Some(&a), None),
            1 => (None, Some(&b)),
            _ if m >= 4 => (Some(&a), Some(&b)),
            _ => (None, Some(&b)),
        };
        let sys = laplacian_for(&joints);
        let got = solve_constrained_edit(&sys, &joints, start, end).unwrap();
        let oracle = kkt_oracle(&joints, &edit_pins(&joints, start, end)).unwrap();
        let gap = max_point_gap(&got, &oracle);
        assert!(gap <= 1e-8, "case {case}: gap {gap:e}");
        checked += 1;
    }
    assert_eq!(checked, 100);
}

#[test]
fn pinned_joints_are_hit_exactly() {
    let mut rng = rng(11);
    for _ in 0..50 {
        let joints = random_joints(&mut rng, 2, 7);
        let a = random_pose(&mut rng, 2);
        let b = random_pose(&mut rng, 2);
        let sys = laplacian_for(&joints);
        let got = solve_constrained_edit(&sys, &joints, Some(&a), Some(&b)).unwrap();
        for (i, t) in edit_pins(&joints, Some(&a), Some(&b)) {
            assert!((&got[i] - t).amax() <= 1e-10);
        }
    }
}

#[test]
fn identity_descriptor_keeps_the_chain() {
    let mut rng = rng(3);
    for d in [2, 3] {
        for m in [3, 4, 6, 11] {
            let chain = random_chain(&mut rng, d, m).unwrap();
            let desc = chain.endpoint_descriptor().unwrap();
            let (moved, comps) = transform_chain(&chain, &desc).unwrap();
            assert!(max_point_gap(moved.joints(), chain.joints()) <= 1e-9);
            assert!(max_component_gap(&comps, chain.components()) <= 1e-9);
        }
    }
}

#[test]
fn unit_single_component_chain_with_entry_only() {
    // K = 1: joints are the two endpoints; shifting the entry slides everything.
    let comp = GaussianComponent::new(1.0, dvector![0.5, 0.0], DMatrix::identity(2, 2) * 0.01).unwrap();
    let gmm = OrderedGmm::new(vec![comp], vec![0.5]).unwrap();
    let chain = ElasticChain::from_parts(gmm, vec![dvector![0.0, 0.0], dvector![1.0, 0.0]]).unwrap();
    let desc = GeometricDescriptor::new(Some(Pose::planar(dvector![0.0, 1.0], 0.0)), None).unwrap();
    let (moved, comps) = transform_chain(&chain, &desc).unwrap();
    assert!((&moved.joints()[1] - dvector![1.0, 1.0]).amax() < 1e-12);
    assert!((comps[0].mean() - dvector![0.5, 1.0]).amax() < 1e-12);
}

#[test]
fn two_component_chain_has_three_joints() {
    let c1 = GaussianComponent::new(0.5, dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
    let c2 = GaussianComponent::new(0.5, dvector![2.0, 0.0], DMatrix::identity(2, 2)).unwrap();
    let gmm = OrderedGmm::new(vec![c1.clone(), c2.clone()], vec![0.25, 0.75]).unwrap();
    let joint = elastic_ds::gaussian_joint(&c1, &c2).unwrap();
    assert!((joint - dvector![1.0, 0.0]).amax() < 1e-12);
    let chain = ElasticChain::from_parts(
        gmm,
        vec![dvector![-1.0, 0.0], dvector![1.0, 0.0], dvector![3.0, 0.0]],
    )
    .unwrap();
    assert_eq!(chain.joints().len(), 3);
    assert_eq!(chain.link_lengths(), &[2.0, 2.0]);
}

#[test]
fn uniform_doubling_scales_means_and_along_link_variance() {
    // One link from the origin to (1,0), component with axis-aligned covariance.
    let comp = GaussianComponent::new(1.0, dvector![0.5, 0.1], dmatrix![0.04, 0.0; 0.0, 0.01]).unwrap();
    let gmm = OrderedGmm::new(vec![comp], vec![0.5]).unwrap();
    let chain = ElasticChain::from_parts(gmm, vec![dvector![0.0, 0.0], dvector![1.0, 0.0]]).unwrap();
    let new_joints = [dvector![0.0, 0.0], dvector![2.0, 0.0]];
    let squared = recover_gmm(&chain, &new_joints).unwrap();
    assert!((squared[0].mean() - dvector![1.0, 0.1]).amax() < 1e-12);
    assert!((squared[0].covariance() - dmatrix![0.16, 0.0; 0.0, 0.01]).amax() < 1e-12);
    let linear = recover_gmm(&chain.clone().with_scaling(EigenScaling::Linear), &new_joints).unwrap();
    assert!((linear[0].covariance() - dmatrix![0.08, 0.0; 0.0, 0.01]).amax() < 1e-12);
    assert_eq!(squared[0].prior(), 1.0);
}

#[test]
fn four_joint_chain_follows_a_quarter_turn_at_the_end() {
    let joints = vec![
        dvector![0.0, 0.0],
        dvector![1.0, 0.0],
        dvector![2.0, 0.0],
        dvector![3.0, 0.0],
    ];
    let comps = (0..3)
        .map(|k| {
            GaussianComponent::new(1.0 / 3.0, dvector![k as f64 + 0.5, 0.0], DMatrix::identity(2, 2) * 0.01)
                .unwrap()
        })
        .collect();
    let chain =
        ElasticChain::from_parts(OrderedGmm::new(comps, vec![0.1, 0.5, 0.9]).unwrap(), joints).unwrap();
    let exit = Pose::planar(dvector![3.0, 0.0], std::f64::consts::FRAC_PI_2);
    let desc = GeometricDescriptor::both(chain.entry_frame().unwrap(), exit).unwrap();
    let (moved, _) = transform_chain(&chain, &desc).unwrap();
    let j = moved.joints();
    assert!((&j[0] - dvector![0.0, 0.0]).amax() < 1e-12);
    assert!((&j[1] - dvector![1.0, 0.0]).amax() < 1e-12);
    assert!((&j[2] - dvector![3.0, -1.0]).amax() < 1e-12);
    assert!((&j[3] - dvector![3.0, 0.0]).amax() < 1e-12);
    let arrive = moved.exit_frame().unwrap().x_axis();
    assert!((arrive - dvector![0.0, 1.0]).amax() < 1e-12);
}

#[test]
fn conflicting_pins_on_a_two_joint_chain_are_rejected() {
    let joints = vec![dvector![0.0, 0.0], dvector![1.0, 0.0]];
    let sys = laplacian_for(&joints);
    let a = Pose::planar(dvector![0.0, 0.0], 0.0);
    let b = Pose::planar(dvector![5.0, 5.0], 0.0);
    let err = solve_constrained_edit(&sys, &joints, Some(&a), Some(&b)).unwrap_err();
    assert!(matches!(err, Error::RankDeficientSystem { .. }), "{err:?}");
}

#[test]
fn stored_link_frames_round_trip() {
    let mut rng = rng(5);
    let chain = random_chain(&mut rng, 3, 6).unwrap();
    let back = ElasticChain::from_stored(
        chain.gmm().clone(),
        chain.joints().to_vec(),
        chain.link_frames().to_vec(),
        chain.scaling(),
    )
    .unwrap();
    assert_eq!(back, chain);
    let recovered = recover_gmm(&chain, chain.joints()).unwrap();
    assert!(max_component_gap(&recovered, chain.components()) <= 1e-12);
}

#[test]
fn reversing_twice_is_the_identity() {
    let mut rng = rng(8);
    let chain = random_chain(&mut rng, 2, 5).unwrap();
    let back = chain.reversed().unwrap().reversed().unwrap();
    assert!(max_point_gap(back.joints(), chain.joints()) <= 1e-15);
    assert!(max_component_gap(back.components(), chain.components()) <= 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translated_descriptor_translates_the_result(
        seed in any::<u64>(),
        d in 2usize..=3,
        m in 3usize..10,
        which in 0u8..3,
        shift in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let mut rng = rng(seed);
        let chain = random_chain(&mut rng, d, m).unwrap();
        let a = random_pose(&mut rng, d);
        let b = random_pose(&mut rng, d);
        let desc = descriptor_variant(&chain, which, a, b);
        let motion = Pose::from_translation(DVector::from_column_slice(&shift[..d]));
        let (base, base_comps) = transform_chain(&chain, &desc).unwrap();
        let (moved, moved_comps) =
            transform_chain(&moved_chain(&chain, &motion), &desc.transformed(&motion)).unwrap();
        let expected = moved_chain(&base, &motion);
        prop_assert!(max_point_gap(moved.joints(), expected.joints()) <= 1e-9);
        prop_assert!(max_component_gap(&moved_comps, expected.components()) <= 1e-9);
        prop_assert!(max_component_gap(&base_comps, base.components()) == 0.0);
    }

    #[test]
    fn planar_rigid_motion_is_equivariant(
        seed in any::<u64>(),
        m in 3usize..10,
        which in 0u8..3,
        angle in -3.1f64..3.1,
        shift in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let mut rng = rng(seed);
        let chain = random_chain(&mut rng, 2, m).unwrap();
        let a = random_pose(&mut rng, 2);
        let b = random_pose(&mut rng, 2);
        let desc = descriptor_variant(&chain, which, a, b);
        let motion = Pose::new(DVector::from_column_slice(&shift), rotation_about_z(2, angle)).unwrap();
        let (base, _) = transform_chain(&chain, &desc).unwrap();
        let (moved, _) =
            transform_chain(&moved_chain(&chain, &motion), &desc.transformed(&motion)).unwrap();
        let expected = moved_chain(&base, &motion);
        prop_assert!(max_point_gap(moved.joints(), expected.joints()) <= 1e-9);
        prop_assert!(max_component_gap(moved.components(), expected.components()) <= 1e-9);
    }

    #[test]
    fn rotating_a_spatial_chain_about_z_is_equivariant(
        seed in any::<u64>(),
        m in 4usize..9,
        angle in -3.1f64..3.1,
    ) {
        let mut rng = rng(seed);
        let chain = random_chain(&mut rng, 3, m).unwrap();
        let desc = GeometricDescriptor::both(
            shifted(&chain.entry_frame().unwrap(), &dvector![0.1, -0.1, 0.05], 0.2).unwrap(),
            shifted(&chain.exit_frame().unwrap(), &dvector![-0.1, 0.1, 0.0], -0.3).unwrap(),
        ).unwrap();
        let motion = Pose::new(dvector![0.3, -0.2, 0.5], rotation_about_z(3, angle)).unwrap();
        let (base, _) = transform_chain(&chain, &desc).unwrap();
        let (moved, _) =
            transform_chain(&moved_chain(&chain, &motion), &desc.transformed(&motion)).unwrap();
        let expected = moved_chain(&base, &motion);
        prop_assert!(max_point_gap(moved.joints(), expected.joints()) <= 1e-9);
        prop_assert!(max_component_gap(moved.components(), expected.components()) <= 1e-9);
    }

    #[test]
    fn recovered_components_stay_positive_definite(
        seed in any::<u64>(),
        d in 2usize..=3,
        m in 3usize..10,
    ) {
        let mut rng = rng(seed);
        let chain = random_chain(&mut rng, d, m).unwrap();
        let new_joints = random_joints(&mut rng, d, m);
        let comps = recover_gmm(&chain, &new_joints).unwrap();
        for c in &comps {
            prop_assert!(c.covariance().clone().cholesky().is_some());
        }
        let total: f64 = comps.iter().map(|c| c.prior()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
