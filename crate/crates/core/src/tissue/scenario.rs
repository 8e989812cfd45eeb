use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Lesion, LesionShape, Material, TissueError, TissueModel};
use crate::geometry::{
    closest_point, is_inside, sample_surface, Bvh, DeformableMesh, SurfacePoint, Vec3,
};

/// Enlargement applied along the anteroposterior axis, mm.
pub const ENLARGEMENT_MM: f64 = 25.0;
/// Scale factor of the presets described as enlarged.
const ENLARGED_SCALE: f64 = 1.15;
const NEOPLASM_SCALE: f64 = 1.1;
const CIRRHOSIS_NOISE_MM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Healthy,
    Cirrhosis,
    TumorsCysts,
    Hepatitis,
    Enlarged,
    Fatty,
    Neoplasm,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Healthy,
        ScenarioKind::Cirrhosis,
        ScenarioKind::TumorsCysts,
        ScenarioKind::Hepatitis,
        ScenarioKind::Enlarged,
        ScenarioKind::Fatty,
        ScenarioKind::Neoplasm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Healthy => "healthy",
            ScenarioKind::Cirrhosis => "cirrhosis",
            ScenarioKind::TumorsCysts => "tumors_cysts",
            ScenarioKind::Hepatitis => "hepatitis",
            ScenarioKind::Enlarged => "enlarged",
            ScenarioKind::Fatty => "fatty",
            ScenarioKind::Neoplasm => "neoplasm",
        }
    }

    /// Human-readable diagnosis label used as a questionnaire choice.
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::Healthy => "Healthy liver",
            ScenarioKind::Cirrhosis => "Cirrhosis",
            ScenarioKind::TumorsCysts => "Tumors and/or cysts",
            ScenarioKind::Hepatitis => "Active hepatitis",
            ScenarioKind::Enlarged => "Enlarged liver",
            ScenarioKind::Fatty => "Fatty infiltration",
            ScenarioKind::Neoplasm => "Hepatic neoplasm",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown scenario `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Optional replacements for preset parameters, as read from JSON config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_k_n_per_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_b_ns_per_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lesions: Option<Vec<Lesion>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_mm: Option<f64>,
}

/// A disease preset realised on a concrete mesh.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub tissue: TissueModel,
    pub mesh: DeformableMesh,
}

pub fn make_scenario(kind: ScenarioKind, mesh: &DeformableMesh, seed: u64) -> Result<Scenario, TissueError> {
    make_scenario_with(kind, mesh, seed, &ScenarioOverrides::default())
}

/// Builds the tissue model and transformed mesh for `kind`. Pure in
/// `(kind, mesh, seed, overrides)`.
pub fn make_scenario_with(
    kind: ScenarioKind,
    mesh: &DeformableMesh,
    seed: u64,
    overrides: &ScenarioOverrides,
) -> Result<Scenario, TissueError> {
    mesh.check_watertight()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let defaults = Material::default();
    let mut base = match kind {
        ScenarioKind::Hepatitis => Material {
            tenderness: 0.5,
            ..defaults
        },
        ScenarioKind::Fatty => Material {
            stiffness_k: 0.6 * defaults.stiffness_k,
            ..defaults
        },
        _ => defaults,
    };
    if let Some(k) = overrides.base_k_n_per_mm {
        base.stiffness_k = k;
    }
    if let Some(b) = overrides.base_b_ns_per_mm {
        base.damping_b = b;
    }
    base.validate()?;

    let scale = match overrides.mesh_scale {
        Some(s) => s,
        None => match kind {
            ScenarioKind::Healthy | ScenarioKind::TumorsCysts => 1.0,
            ScenarioKind::Cirrhosis | ScenarioKind::Hepatitis | ScenarioKind::Fatty => ENLARGED_SCALE,
            ScenarioKind::Neoplasm => NEOPLASM_SCALE,
            ScenarioKind::Enlarged => {
                let (lo, hi) = mesh.bounds();
                let span = hi.y - lo.y;
                (span + ENLARGEMENT_MM) / span
            }
        },
    };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(TissueError::InvalidScale(scale));
    }
    let noise = overrides.noise_mm.unwrap_or(match kind {
        ScenarioKind::Cirrhosis => CIRRHOSIS_NOISE_MM,
        _ => 0.0,
    });

    let mut out_mesh = if scale == 1.0 {
        mesh.with_rest_positions(mesh.rest_positions().to_vec())?
    } else {
        mesh.scaled_about_centroid(scale)?
    };
    if noise > 0.0 {
        out_mesh = add_surface_noise(&out_mesh, noise, &mut rng)?;
    }

    let lesions = match &overrides.lesions {
        Some(list) => list.clone(),
        None => preset_lesions(kind, &out_mesh, &base, &mut rng),
    };

    let tissue = TissueModel {
        base,
        lesions,
        mesh_scale: scale,
        surface_noise_amplitude: noise,
    };
    tissue.validate()?;
    Ok(Scenario {
        kind,
        tissue,
        mesh: out_mesh,
    })
}

/// Seeded per-vertex displacement along the normal, averaged over each
/// vertex's 1-ring and rescaled so the largest displacement equals
/// `amplitude`.
fn add_surface_noise(
    mesh: &DeformableMesh,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DeformableMesh, TissueError> {
    let raw: Vec<f64> = (0..mesh.vertex_count())
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let rings = mesh.vertex_neighbours();
    let smooth: Vec<f64> = rings
        .iter()
        .enumerate()
        .map(|(v, ring)| {
            let sum: f64 = raw[v] + ring.iter().map(|&u| raw[u as usize]).sum::<f64>();
            sum / (ring.len() + 1) as f64
        })
        .collect();
    let peak = smooth.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let gain = if peak > 0.0 { amplitude / peak } else { 0.0 };
    let positions = mesh
        .rest_positions()
        .iter()
        .zip(mesh.vertex_normals())
        .zip(&smooth)
        .map(|((p, n), s)| p + n * (s * gain))
        .collect();
    Ok(mesh.with_rest_positions(positions)?)
}

fn preset_lesions(
    kind: ScenarioKind,
    mesh: &DeformableMesh,
    base: &Material,
    rng: &mut ChaCha8Rng,
) -> Vec<Lesion> {
    let bvh = Bvh::build(mesh, true);
    let scaled = |factor: f64| Material {
        stiffness_k: factor * base.stiffness_k,
        ..*base
    };
    let mut lesions = Vec::new();
    let push = |shape: LesionShape, material: Material, sigma: f64, lesions: &mut Vec<Lesion>| {
        lesions.push(Lesion {
            id: lesions.len() as u32,
            shape,
            material,
            falloff_sigma: sigma,
        });
    };

    match kind {
        ScenarioKind::Cirrhosis => {
            let count = rng.gen_range(8..=15);
            for _ in 0..count {
                let attach = random_surface_point(mesh, &bvh, rng);
                let radius = rng.gen_range(3.0..6.0);
                push(LesionShape::SurfaceNodule { attach, radius }, scaled(4.0), 2.0, &mut lesions);
            }
        }
        ScenarioKind::Neoplasm => {
            let count = rng.gen_range(3..=6);
            for _ in 0..count {
                let attach = random_surface_point(mesh, &bvh, rng);
                let radius = rng.gen_range(4.0..8.0);
                push(LesionShape::SurfaceNodule { attach, radius }, scaled(12.0), 2.5, &mut lesions);
            }
        }
        ScenarioKind::TumorsCysts => {
            let tumors = rng.gen_range(1..=3);
            for _ in 0..tumors {
                let semi_axes = Vec3::new(
                    rng.gen_range(6.0..12.0),
                    rng.gen_range(6.0..12.0),
                    rng.gen_range(6.0..12.0),
                );
                let center = interior_point(mesh, &bvh, semi_axes.max(), rng);
                push(LesionShape::Ellipsoid { center, semi_axes }, scaled(5.0), 3.0, &mut lesions);
            }
            let cysts = rng.gen_range(1..=2);
            for _ in 0..cysts {
                let radius = rng.gen_range(5.0..10.0);
                let center = interior_point(mesh, &bvh, radius, rng);
                push(LesionShape::Sphere { center, radius }, scaled(0.3), 3.0, &mut lesions);
            }
        }
        ScenarioKind::Healthy | ScenarioKind::Hepatitis | ScenarioKind::Enlarged | ScenarioKind::Fatty => {}
    }
    lesions
}

fn random_surface_point(mesh: &DeformableMesh, bvh: &Bvh, rng: &mut ChaCha8Rng) -> SurfacePoint {
    let (_, p) = sample_surface(mesh, 1, rng)[0];
    closest_point(bvh, mesh, &p).0
}

/// A point 1-4 mm beneath the surface plus `extent`, so a lesion of that
/// extent sits fully inside yet close enough to be felt.
fn interior_point(mesh: &DeformableMesh, bvh: &Bvh, extent: f64, rng: &mut ChaCha8Rng) -> Vec3 {
    let mut fallback = mesh.centroid();
    for _ in 0..200 {
        let sp = random_surface_point(mesh, bvh, rng);
        let depth = rng.gen_range(1.0..4.0) + extent;
        let candidate = sp.position - sp.pseudo_normal * depth;
        if is_inside(bvh, mesh, &candidate) {
            let clearance = closest_point(bvh, mesh, &candidate).1;
            if clearance >= extent {
                return candidate;
            }
            fallback = candidate;
        }
    }
    fallback
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;
    use crate::tissue::stiffness_at;

    #[test]
    fn healthy_has_no_lesions() {
        let mesh = primitives::liver_phantom();
        for seed in [0, 1, 99] {
            let s = make_scenario(ScenarioKind::Healthy, &mesh, seed).unwrap();
            assert!(s.tissue.lesions.is_empty());
            assert_eq!(s.tissue.mesh_scale, 1.0);
            assert_eq!(s.mesh.rest_positions(), mesh.rest_positions());
        }
    }

    #[test]
    fn enlarged_adds_25_mm_to_ap_span() {
        let mesh = primitives::liver_phantom();
        let (lo, hi) = mesh.bounds();
        assert!((hi.y - lo.y - 150.0).abs() < 1e-6);
        let s = make_scenario(ScenarioKind::Enlarged, &mesh, 7).unwrap();
        let (lo, hi) = s.mesh.bounds();
        assert!((hi.y - lo.y - 175.0).abs() < 1.0);
        assert_eq!(s.mesh.triangles(), mesh.triangles());
    }

    #[test]
    fn cirrhosis_is_deterministic_and_nodular() {
        let mesh = primitives::liver_phantom();
        let a = make_scenario(ScenarioKind::Cirrhosis, &mesh, 7).unwrap();
        let b = make_scenario(ScenarioKind::Cirrhosis, &mesh, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&a.tissue.lesions).unwrap(),
            serde_json::to_string(&b.tissue.lesions).unwrap()
        );
        assert_eq!(a.mesh.rest_positions(), b.mesh.rest_positions());
        assert!((8..=15).contains(&a.tissue.lesions.len()));
        assert_eq!(a.tissue.mesh_scale, 1.15);
        assert!(a.tissue.surface_noise_amplitude > 0.0);
        assert!(a.mesh.is_watertight());
        for l in &a.tissue.lesions {
            assert!(l.material.stiffness_k > a.tissue.base.stiffness_k);
        }
        let c = make_scenario(ScenarioKind::Cirrhosis, &mesh, 8).unwrap();
        assert_ne!(a.tissue.lesions, c.tissue.lesions);
    }

    #[test]
    fn presets_match_their_findings() {
        let mesh = primitives::liver_phantom();
        let hep = make_scenario(ScenarioKind::Hepatitis, &mesh, 1).unwrap();
        assert_eq!(hep.tissue.base.tenderness, 0.5);
        assert_eq!(hep.tissue.mesh_scale, 1.15);

        let fatty = make_scenario(ScenarioKind::Fatty, &mesh, 1).unwrap();
        assert!(fatty.tissue.base.stiffness_k < Material::default().stiffness_k);
        assert_eq!(fatty.tissue.mesh_scale, 1.15);

        let neo = make_scenario(ScenarioKind::Neoplasm, &mesh, 1).unwrap();
        assert_eq!(neo.tissue.mesh_scale, 1.1);
        assert!(!neo.tissue.lesions.is_empty());
        for l in &neo.tissue.lesions {
            assert!(l.material.stiffness_k >= 10.0 * neo.tissue.base.stiffness_k);
        }
    }

    #[test]
    fn tumors_and_cysts_sit_inside_and_are_palpable() {
        let mesh = primitives::liver_phantom();
        for seed in 0..5 {
            let s = make_scenario(ScenarioKind::TumorsCysts, &mesh, seed).unwrap();
            let bvh = Bvh::build(&s.mesh, true);
            let tumors = s
                .tissue
                .lesions
                .iter()
                .filter(|l| l.material.stiffness_k > s.tissue.base.stiffness_k)
                .count();
            let cysts = s.tissue.lesions.len() - tumors;
            assert!((1..=3).contains(&tumors) && (1..=2).contains(&cysts));
            for l in &s.tissue.lesions {
                let center = match l.shape {
                    LesionShape::Ellipsoid { center, .. } | LesionShape::Sphere { center, .. } => center,
                    LesionShape::SurfaceNodule { .. } => unreachable!(),
                };
                assert!(is_inside(&bvh, &s.mesh, &center));
                // its influence reaches the nearest surface point
                let (sp, _) = closest_point(&bvh, &s.mesh, &center);
                let m = stiffness_at(&s.tissue, &sp.position);
                assert_ne!(m.stiffness_k, s.tissue.base.stiffness_k);
            }
        }
    }

    #[test]
    fn non_watertight_mesh_is_rejected() {
        let positions = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let open = DeformableMesh::new(positions, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            make_scenario(ScenarioKind::Healthy, &open, 0),
            Err(TissueError::Mesh(_))
        ));
    }

    #[test]
    fn overrides_replace_preset_values() {
        let mesh = primitives::liver_phantom();
        let json = r#"{"base_k_n_per_mm": 0.8, "base_b_ns_per_mm": 0.0, "mesh_scale": 1.2, "noise_mm": 0.0,
            "lesions": [{"id": 4, "shape": {"kind": "sphere", "center": [0, 0, 0], "radius": 5},
                         "material": {"stiffness_k": 3, "damping_b": 0, "tenderness": 0}, "falloff_sigma": 2}]}"#;
        let o: ScenarioOverrides = serde_json::from_str(json).unwrap();
        let s = make_scenario_with(ScenarioKind::Cirrhosis, &mesh, 3, &o).unwrap();
        assert_eq!(s.tissue.base.stiffness_k, 0.8);
        assert_eq!(s.tissue.base.damping_b, 0.0);
        assert_eq!(s.tissue.mesh_scale, 1.2);
        assert_eq!(s.tissue.lesions.len(), 1);
        assert_eq!(s.tissue.lesions[0].id, 4);
        assert!(serde_json::from_str::<ScenarioOverrides>(r#"{"stiffness": 1}"#).is_err());
    }

    #[test]
    fn kind_parses_from_its_name() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.as_str().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("hepatic".parse::<ScenarioKind>().is_err());
    }
}
