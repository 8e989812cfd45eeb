use palpsim_core::geometry::{primitives, Vec3};
use palpsim_core::tissue::{
    make_scenario, stiffness_at, Lesion, LesionShape, Material, ScenarioKind, TissueModel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn material() -> impl Strategy<Value = Material> {
    (0.05f64..10.0, 0.0f64..0.1, 0.0f64..=1.0).prop_map(|(k, b, t)| Material::new(k, b, t).unwrap())
}

fn shape() -> impl Strategy<Value = LesionShape> {
    prop_oneof![
        (vec3(50.0), 0.5f64..15.0).prop_map(|(center, radius)| LesionShape::Sphere { center, radius }),
        (vec3(50.0), (0.5f64..15.0, 0.5f64..15.0, 0.5f64..15.0)).prop_map(|(center, (a, b, c))| {
            LesionShape::Ellipsoid {
                center,
                semi_axes: Vec3::new(a, b, c),
            }
        }),
    ]
}

fn tissue(max_lesions: usize) -> impl Strategy<Value = TissueModel> {
    (
        material(),
        prop::collection::vec((shape(), material(), 0.5f64..5.0), 0..=max_lesions),
    )
        .prop_map(|(base, specs)| TissueModel {
            base,
            lesions: specs
                .into_iter()
                .enumerate()
                .map(|(i, (shape, material, falloff_sigma))| Lesion {
                    id: i as u32,
                    shape,
                    material,
                    falloff_sigma,
                })
                .collect(),
            mesh_scale: 1.0,
            surface_noise_amplitude: 0.0,
        })
}

proptest! {
    #[test]
    fn effective_stiffness_stays_within_material_range(t in tissue(5), p in vec3(80.0)) {
        let (lo, hi) = t.stiffness_bounds();
        let m = stiffness_at(&t, &p);
        prop_assert!(m.stiffness_k >= lo * (1.0 - 1e-12) && m.stiffness_k <= hi * (1.0 + 1e-12));
        prop_assert!((0.0..=1.0).contains(&m.tenderness));
        prop_assert!(m.damping_b >= 0.0);
    }
}

// The dominant-lesion blend switches lesions where two weights tie, so the
// Lipschitz bound is checked with lesions whose influence regions never
// overlap.
#[test]
fn effective_stiffness_is_lipschitz_for_separated_lesions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let base = Material::new(rng.gen_range(0.2..1.0), 0.02, 0.0).unwrap();
        let mut lesions = Vec::new();
        for i in 0..3 {
            let sigma = rng.gen_range(1.0..4.0);
            let radius = rng.gen_range(2.0..8.0);
            let center = Vec3::new(i as f64 * 120.0 - 120.0, rng.gen_range(-5.0..5.0), 0.0);
            let k = base.stiffness_k * rng.gen_range(0.2..12.0);
            lesions.push(Lesion {
                id: i,
                shape: LesionShape::Sphere { center, radius },
                material: Material::new(k, 0.02, 0.0).unwrap(),
                falloff_sigma: sigma,
            });
        }
        let model = TissueModel {
            base,
            lesions,
            mesh_scale: 1.0,
            surface_noise_amplitude: 0.0,
        };
        let contrast = model
            .lesions
            .iter()
            .map(|l| (l.material.stiffness_k - base.stiffness_k).abs())
            .fold(0.0, f64::max);
        let sigma_min = model.lesions.iter().map(|l| l.falloff_sigma).fold(f64::INFINITY, f64::min);
        // max slope of exp(-x^2) is sqrt(2/e)
        let lipschitz = contrast * (2.0 / std::f64::consts::E).sqrt() / sigma_min;

        for _ in 0..500 {
            let anchor = model.lesions[rng.gen_range(0..3)].shape;
            let LesionShape::Sphere { center, .. } = anchor else { unreachable!() };
            let p = center + Vec3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let q = p + Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let dk = (stiffness_at(&model, &p).stiffness_k - stiffness_at(&model, &q).stiffness_k).abs();
            assert!(
                dk <= lipschitz * (p - q).norm() + 1e-12,
                "trial {trial}: |dk| = {dk} exceeds {lipschitz} * {}",
                (p - q).norm()
            );
        }
    }
}

#[test]
fn scenario_presets_are_pure_and_keep_topology() {
    let mesh = primitives::liver_phantom();
    for kind in ScenarioKind::ALL {
        for seed in [0u64, 7, 123456789] {
            let a = make_scenario(kind, &mesh, seed).unwrap();
            let b = make_scenario(kind, &mesh, seed).unwrap();
            assert_eq!(a.tissue, b.tissue);
            assert_eq!(
                serde_json::to_vec(&a.tissue).unwrap(),
                serde_json::to_vec(&b.tissue).unwrap()
            );
            assert_eq!(a.mesh.rest_positions(), b.mesh.rest_positions());
            assert_eq!(a.mesh.triangles(), mesh.triangles());
            assert!(a.mesh.is_watertight());
        }
    }
}

#[test]
fn scaling_is_about_the_centroid() {
    let mesh = primitives::liver_phantom();
    let c0 = mesh.centroid();
    for kind in [ScenarioKind::Hepatitis, ScenarioKind::Fatty, ScenarioKind::Neoplasm, ScenarioKind::Enlarged] {
        let s = make_scenario(kind, &mesh, 5).unwrap();
        assert!((s.mesh.centroid() - c0).norm() < 1e-9);
        let scale = s.tissue.mesh_scale;
        for (p, q) in mesh.rest_positions().iter().zip(s.mesh.rest_positions()) {
            let expected = c0 + (p - c0) * scale;
            assert!((expected - q).norm() < 1e-9);
        }
    }
}
