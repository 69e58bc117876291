use std::f64::consts::PI;
use std::sync::OnceLock;

use compose_core::envmap::{direction_to_uv, scale_env, EnvironmentMap};
use compose_core::gausslight::{fit_gaussian, synth_gaussian_env, GaussianLight, LightEdit};
use compose_core::metrics::{boundary_band, luma, shadow_stats};
use compose_core::olat::{diffuse_image, edit, render_olat, shadowed_image, EditRequest, LightTarget};
use compose_core::synthstage::{build_olat_basis, fibonacci_directions, ground_mask, primary_hits, umbra_mask, BuiltinScene};
use compose_core::{LinearImage, OlatBasis};

const SIZE: usize = 48;

fn ball() -> &'static OlatBasis {
    static B: OnceLock<OlatBasis> = OnceLock::new();
    B.get_or_init(|| build_olat_basis(&BuiltinScene::SphereOnPlane.spec(), 160, SIZE, SIZE).unwrap())
}

fn sky_with_sun(u: f64, v: f64, sigma: f64, gamma: f64) -> EnvironmentMap {
    let sun = synth_gaussian_env(&GaussianLight::new(u, v, sigma, gamma).unwrap(), 64).unwrap();
    sun.linear_combination(1.0, &EnvironmentMap::uniform(64, [0.2, 0.22, 0.25]).unwrap(), 1.0)
        .unwrap()
}

fn max_abs(img: &LinearImage) -> f32 {
    img.pixels().iter().flatten().fold(0.0f32, |m, &x| m.max(x.abs()))
}

/// Azimuth of the centroid of ground pixels darker than half the median
/// ground luminance.
fn shadow_azimuth(img: &LinearImage) -> f64 {
    let scene = BuiltinScene::SphereOnPlane.spec();
    let hits = primary_hits(&scene, SIZE, SIZE);
    let ground = ground_mask(&scene, SIZE, SIZE);
    let l = luma(img);
    let mut lit: Vec<f64> = l.iter().zip(&ground).filter(|(_, g)| **g).map(|(x, _)| *x).collect();
    lit.sort_by(f64::total_cmp);
    let threshold = 0.5 * lit[lit.len() / 2];
    let (mut x, mut z) = (0.0, 0.0);
    for i in 0..l.len() {
        if ground[i] && l[i] < threshold {
            let p = hits[i].unwrap().point;
            x += p.x;
            z += p.z;
        }
    }
    z.atan2(x)
}

#[test]
fn render_scales_with_the_map() {
    let env = sky_with_sun(0.2, 0.3, 0.2, 3.0);
    let once = render_olat(ball(), &env).unwrap();
    let twice = render_olat(ball(), &scale_env(&env, 2.0).unwrap()).unwrap();
    for (a, b) in once.pixels().iter().zip(twice.pixels()) {
        for c in 0..3 {
            assert!((2.0 * a[c] - b[c]).abs() <= 1e-5 * b[c].abs().max(1e-20));
        }
    }
}

#[test]
fn wide_blur_approaches_the_mean_radiance_render() {
    // A near-uniform map, blurred at the widest allowed angle.
    let env = synth_gaussian_env(&GaussianLight::new(0.4, 0.4, 0.3, 0.3).unwrap(), 64)
        .unwrap()
        .linear_combination(1.0, &EnvironmentMap::uniform(64, [1.0; 3]).unwrap(), 1.0)
        .unwrap();
    let blurred = diffuse_image(ball(), &env, PI).unwrap();
    let mean = env.mean_radiance().map(|c| c as f32);
    let flat = render_olat(ball(), &EnvironmentMap::uniform(64, mean).unwrap()).unwrap();
    let scale = max_abs(&flat);
    let worst = blurred
        .pixels()
        .iter()
        .zip(flat.pixels())
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
        .fold(0.0f32, f32::max);
    assert!(worst < 0.02 * scale, "{worst} vs {scale}");
}

#[test]
fn uniform_map_is_a_blur_fixed_point() {
    let env = EnvironmentMap::uniform(32, [0.7, 0.5, 0.3]).unwrap();
    let a = diffuse_image(ball(), &env, 0.8).unwrap();
    let b = render_olat(ball(), &env).unwrap();
    for (p, q) in a.pixels().iter().zip(b.pixels()) {
        for c in 0..3 {
            assert!((p[c] - q[c]).abs() <= 1e-5 * q[c].max(1e-6));
        }
    }
}

#[test]
fn diffusion_softens_the_shadow_edge() {
    let scene = BuiltinScene::SphereOnPlane.spec();
    let d = *fibonacci_directions(160).iter().find(|d| d.y > 0.5 && d.y < 0.8 && d.z > 0.2).unwrap();
    let (u, v) = direction_to_uv(d);
    let env = sky_with_sun(u, v, 0.08, 60.0);
    let umbra = umbra_mask(&scene, d, SIZE, SIZE).unwrap();
    let band = boundary_band(&umbra, ball().mask().unwrap(), SIZE, SIZE, 1);
    let hard = shadow_stats(&render_olat(ball(), &env).unwrap(), &umbra, &band).unwrap();
    let soft = shadow_stats(&diffuse_image(ball(), &env, 0.8).unwrap(), &umbra, &band).unwrap();
    assert!(soft.edge_max_grad < hard.edge_max_grad, "{soft:?} {hard:?}");
    assert!(soft.umbra_mean_luma > hard.umbra_mean_luma);
}

#[test]
fn hard_branch_alone_is_the_gaussian_relit_image() {
    let env = sky_with_sun(0.7, 0.25, 0.1, 5.0);
    let fitted = fit_gaussian(&env).unwrap().light;
    let req = EditRequest {
        omega_d: 0.0,
        ..EditRequest::new(LightTarget::Relative(LightEdit::default()))
    };
    let out = edit(ball(), &env, &req).unwrap();
    assert_eq!(out.light, fitted);
    assert_eq!(out.edited, shadowed_image(ball(), &fitted, req.light_env_width).unwrap());
    assert!(out.edited.pixels().iter().flatten().all(|c| c.is_finite() && *c >= 0.0));
}

#[test]
fn halving_sigma_at_fixed_power_hardens_the_shadow() {
    let scene = BuiltinScene::HeadProxy.spec();
    let basis = build_olat_basis(&scene, 160, SIZE, SIZE).unwrap();
    let d = *fibonacci_directions(160).iter().find(|d| d.y > 0.5 && d.y < 0.8 && d.z > 0.2).unwrap();
    let (u, v) = direction_to_uv(d);
    let umbra = umbra_mask(&scene, d, SIZE, SIZE).unwrap();
    let band = boundary_band(&umbra, basis.mask().unwrap(), SIZE, SIZE, 1);
    let stats = |sigma: f64| {
        let light = GaussianLight::new(u, v, sigma, 0.05 / (sigma * sigma)).unwrap();
        shadow_stats(&shadowed_image(&basis, &light, 256).unwrap(), &umbra, &band).unwrap()
    };
    for sigma in [0.3, 0.2] {
        let (wide, narrow) = (stats(sigma), stats(sigma / 2.0));
        assert!(narrow.edge_max_grad > wide.edge_max_grad, "{sigma}: {narrow:?} {wide:?}");
        assert!(narrow.umbra_mean_luma < wide.umbra_mean_luma);
    }
}

#[test]
fn rotating_the_map_turns_the_shadow() {
    let env = synth_gaussian_env(&GaussianLight::new(0.1, 0.35, 0.1, 4.0).unwrap(), 128).unwrap();
    let base = shadow_azimuth(&render_olat(ball(), &env).unwrap());
    let spacing = (4.0 * PI / 160.0).sqrt();
    for delta in [0.125, 0.25, 0.5, 0.75] {
        let turned = shadow_azimuth(&render_olat(ball(), &env.rotate(delta)).unwrap());
        let moved = (turned - base).rem_euclid(2.0 * PI);
        let err = (moved - 2.0 * PI * delta).abs();
        assert!(err.min(2.0 * PI - err) < spacing, "{delta}: moved {moved}");
    }
}

#[test]
fn relative_edit_requires_a_dominant_light_but_absolute_does_not() {
    let flat = EnvironmentMap::uniform(32, [0.4; 3]).unwrap();
    let rel = EditRequest::new(LightTarget::Relative(LightEdit::default()));
    assert!(edit(ball(), &flat, &rel).is_err());
    let abs = EditRequest::new(LightTarget::Absolute(GaussianLight::new(0.1, 0.2, 0.1, 2.0).unwrap()));
    let out = edit(ball(), &flat, &abs).unwrap();
    assert!(out.fit.is_none());
}
