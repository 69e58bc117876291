use std::fs;
use std::path::Path;

use compose_core::dataset::{emit_dataset, read_manifest, resolve_env, DatasetRecipe};
use compose_core::envmap::load_envmap;
use compose_core::gausslight::{synth_gaussian_env, LightFeatureMap};
use compose_core::olat::{diffuse_image, render_olat};
use compose_core::synthstage::{build_olat_basis, SceneSpec};
use compose_core::LinearImage;

fn recipe() -> DatasetRecipe {
    DatasetRecipe {
        scenes: vec!["sphere_on_plane".into(), "head_proxy".into()],
        envs: vec!["builtin:sunny".into(), "builtin:sunset".into(), "builtin:overcast".into()],
        count: 5,
        seed: 11,
        lights: 24,
        width: 12,
        height: 12,
        env_width: 32,
        light_env_width: 32,
        ..DatasetRecipe::default()
    }
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_recipe_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_dataset(&recipe(), a.path()).unwrap();
    emit_dataset(&recipe(), b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 5 * 6 + 2);
    assert!(ta == tb);
}

#[test]
fn sample_files_agree_with_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let r = recipe();
    emit_dataset(&r, dir.path()).unwrap();
    let records = read_manifest(dir.path()).unwrap();
    assert_eq!(records.len(), r.count);
    for (i, rec) in records.iter().enumerate() {
        assert_eq!(rec.index, i);
        let path = |f: &str| dir.path().join(f);

        let decoded = LightFeatureMap::read(&path(&rec.files.light)).unwrap().to_light().unwrap();
        assert!((decoded.u() - rec.light.u()).abs() < 1e-6);
        assert!((decoded.v() - rec.light.v()).abs() < 1e-6);
        assert!((decoded.sigma() - rec.light.sigma()).abs() < 1e-6 * decoded.sigma().max(1.0));
        assert!((decoded.gamma() - rec.light.gamma()).abs() < 1e-6 * rec.light.gamma().max(1.0));

        let basis = build_olat_basis(&SceneSpec::resolve(&rec.scene).unwrap(), r.lights, r.width, r.height).unwrap();
        let env = rec.augment(&resolve_env(&rec.env, r.env_width).unwrap()).unwrap();
        assert_eq!(load_envmap(&path(&rec.files.env)).unwrap(), env);
        assert_eq!(LinearImage::load(&path(&rec.files.input)).unwrap().pixels(), render_olat(&basis, &env).unwrap().pixels());
        assert_eq!(
            LinearImage::load(&path(&rec.files.diffuse)).unwrap().pixels(),
            diffuse_image(&basis, &env, rec.beta).unwrap().pixels()
        );
        let light_env = synth_gaussian_env(&rec.light, rec.light_env_width).unwrap();
        assert_eq!(
            LinearImage::load(&path(&rec.files.shadowed)).unwrap().pixels(),
            render_olat(&basis, &light_env).unwrap().pixels()
        );
    }
}

#[test]
fn invalid_recipes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = recipe();
    r.scenes.clear();
    assert!(emit_dataset(&r, dir.path()).is_err());
    let mut r = recipe();
    r.envs = vec!["builtin:no-such-sky".into()];
    assert!(emit_dataset(&r, dir.path()).is_err());
    let mut r = recipe();
    r.count = 0;
    assert!(emit_dataset(&r, dir.path()).is_err());
}
