use std::time::Instant;

use palpsim_core::geometry::{primitives, Bvh, SurfacePoint, Vec3};
use palpsim_core::haptics::{
    classify_force, compute_force, resolve_contact, ContactResult, ForceClassification,
    HapticsConfig, ProbeInput, ProbeState, Simulation, Tool,
};
use palpsim_core::tissue::{Material, TissueModel};
use palpsim_testkit::{brute_closest, ray_parity_inside};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn contact(k: f64, b: f64, depth: f64, normal: Vec3) -> ContactResult {
    ContactResult {
        in_contact: depth > 0.0,
        proxy: SurfacePoint {
            position: Vec3::zeros(),
            triangle_id: 0,
            barycentric: [1.0, 0.0, 0.0],
            pseudo_normal: normal,
        },
        depth,
        direction: normal,
        material: Material::new(k, b, 0.0).unwrap(),
        force: Vec3::zeros(),
    }
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

#[test]
fn interior_depth_matches_all_triangle_scan() {
    let mesh = primitives::liver_phantom();
    let bvh = Bvh::build(&mesh, true);
    let tissue = TissueModel::homogeneous(Material::default());
    let (lo, hi) = mesh.bounds();
    let dir = Vec3::new(0.31, 0.77, 0.55).normalize();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 500 {
        let p = Vec3::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z..hi.z),
        );
        if !ray_parity_inside(mesh.rest_positions(), mesh.triangles(), &p, &dir) {
            continue;
        }
        let c = resolve_contact(&bvh, &mesh, &tissue, &ProbeState::at_rest(p, Tool::Babcock));
        assert!(c.in_contact, "{p:?} is inside by ray parity");
        let (d_ref, _, _) = brute_closest(mesh.rest_positions(), mesh.triangles(), &p);
        assert!((c.depth - d_ref).abs() < 1e-9, "depth {} vs {}", c.depth, d_ref);
        checked += 1;
    }
}

#[test]
fn outside_bounding_sphere_is_free() {
    let mesh = primitives::liver_phantom();
    let bvh = Bvh::build(&mesh, true);
    let tissue = TissueModel::homogeneous(Material::default());
    let (lo, hi) = mesh.bounds();
    let centre = (lo + hi) * 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let p = centre + unit(&mut rng) * (mesh.bounding_radius() + 5.0);
        let probe = ProbeState::at_rest(p, Tool::Maryland);
        let c = resolve_contact(&bvh, &mesh, &tissue, &probe);
        assert!(!c.in_contact);
        assert_eq!(c.depth, 0.0);
        assert_eq!(compute_force(&c, &probe, &HapticsConfig::default()), Vec3::zeros());
    }
}

#[test]
fn spring_force_is_exactly_proportional() {
    // clamp lifted so the law itself is exercised
    let cfg = HapticsConfig {
        force_clamp_n: f64::MAX,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let k = rng.gen_range(0.01..20.0);
        let d = rng.gen_range(1e-6..50.0);
        let n = unit(&mut rng);
        let probe = ProbeState::at_rest(Vec3::zeros(), Tool::Babcock);
        let f = compute_force(&contact(k, 0.0, d, n), &probe, &cfg);
        assert!((f.norm() - k * d).abs() <= 1e-12 * k * d);
        let f2 = compute_force(&contact(k, 0.0, 2.0 * d, n), &probe, &cfg);
        assert_eq!(f2, f * 2.0);
        assert!(f.dot(&n) >= 0.0);
    }
}

proptest! {
    #[test]
    fn force_never_pulls_and_respects_clamp(
        k in 0.01f64..20.0,
        b in 0.0f64..0.5,
        d in 0.0f64..30.0,
        v in prop::array::uniform3(-2000.0f64..2000.0),
        clamp in 0.5f64..10.0,
    ) {
        let cfg = HapticsConfig { force_clamp_n: clamp, ..Default::default() };
        let n = Vec3::new(0.3, -0.4, 0.5).normalize();
        let mut probe = ProbeState::at_rest(Vec3::zeros(), Tool::Babcock);
        probe.velocity = Vec3::from(v);
        let f = compute_force(&contact(k, b, d, n), &probe, &cfg);
        prop_assert!(f.dot(&n) >= 0.0);
        prop_assert!(f.norm() <= clamp * (1.0 + 1e-15));
    }

    #[test]
    fn homogeneity_and_additivity_without_damping(k in 0.01f64..5.0, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, a in 0.0f64..4.0) {
        let cfg = HapticsConfig { force_clamp_n: f64::MAX, ..Default::default() };
        let probe = ProbeState::at_rest(Vec3::zeros(), Tool::Babcock);
        let n = Vec3::z();
        let f = |d: f64| compute_force(&contact(k, 0.0, d, n), &probe, &cfg).norm();
        prop_assert!((f(a * d1) - a * f(d1)).abs() <= 1e-12 * (1.0 + a * f(d1)));
        prop_assert!((f(d1 + d2) - (f(d1) + f(d2))).abs() <= 1e-12 * (1.0 + f(d1 + d2)));
    }

    #[test]
    fn classification_is_monotone(a in 0.0f64..5.0, b in 0.0f64..5.0, tenderness in 0.0f64..=1.0) {
        let cfg = HapticsConfig::default();
        let m = Material::new(0.5, 0.02, tenderness).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let class = |x: f64| classify_force(&Vec3::new(0.0, x, 0.0), &m, &cfg);
        prop_assert!(class(lo) <= class(hi));
    }
}

#[test]
fn force_vanishes_at_the_contact_boundary() {
    let cfg = HapticsConfig::default();
    let probe = ProbeState::at_rest(Vec3::zeros(), Tool::Babcock);
    let mut last = f64::INFINITY;
    for e in 1..=12 {
        let d = 10f64.powi(-e);
        let f = compute_force(&contact(0.5, 0.02, d, Vec3::z()), &probe, &cfg).norm();
        assert!(f < last);
        last = f;
    }
    assert!(last < 1e-12);
}

#[test]
fn deformation_is_local_from_rest() {
    let mesh = primitives::liver_phantom();
    let mut sim = Simulation::new(mesh, TissueModel::homogeneous(Material::default()), HapticsConfig::default()).unwrap();
    let top = Vec3::new(0.0, 75.0, 0.0);
    for i in 0..200 {
        let frame = sim
            .step(&ProbeInput {
                t: i as f64 * 0.001,
                pos: top - Vec3::y() * (i as f64 * 0.01),
                tool: Tool::Maryland,
            })
            .unwrap();
        let proxy = frame.contact.proxy.position;
        let rho = Tool::Maryland.falloff_rho();
        let m = sim.mesh();
        for (x, y) in m.rest_positions().iter().zip(m.current_positions()) {
            if (x - proxy).norm() > 4.0 * rho {
                assert_eq!(x, y);
            }
        }
    }
}

#[test]
fn thousand_steps_fit_the_one_second_budget() {
    let mesh = primitives::liver_phantom();
    assert!(mesh.triangle_count() >= 2900 && mesh.triangle_count() <= 3100);
    let mut sim = Simulation::new(mesh, TissueModel::homogeneous(Material::default()), HapticsConfig::default()).unwrap();
    let top = Vec3::new(0.0, 75.0, 0.0);
    let start = Instant::now();
    for i in 0..1000 {
        let t = i as f64 * 0.001;
        let pos = top + Vec3::new(20.0 * t, -1.5 * (t * 8.0).sin().abs(), 0.0);
        sim.step(&ProbeInput { t, pos, tool: Tool::Babcock }).unwrap();
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "1000 steps took {elapsed:?}");
}

#[test]
fn release_relaxes_below_a_micrometre_within_twenty_tau() {
    let mesh = primitives::liver_phantom();
    let cfg = HapticsConfig::default();
    let mut sim = Simulation::new(mesh, TissueModel::homogeneous(Material::default()), cfg).unwrap();
    let top = Vec3::new(0.0, 75.0, 0.0);
    let mut k = 0u64;
    // hold at the depth cap long enough to saturate
    for _ in 0..1000 {
        let f = sim
            .step(&ProbeInput {
                t: k as f64 * cfg.dt_s,
                pos: top - Vec3::y() * 3.0,
                tool: Tool::Babcock,
            })
            .unwrap();
        assert_ne!(f.classification, ForceClassification::Fail);
        k += 1;
    }
    assert!(sim.field().max_displacement() > 2.9);
    let release = k;
    let steps = (20.0 * cfg.relaxation_tau_s / cfg.dt_s).round() as u64;
    while k < release + steps {
        sim.step(&ProbeInput {
            t: k as f64 * cfg.dt_s,
            pos: top + Vec3::y() * 20.0,
            tool: Tool::Babcock,
        })
        .unwrap();
        k += 1;
    }
    assert!(sim.field().max_displacement() < 1e-6);
}
