use std::ffi::{CStr, CString};
use std::ptr;

use dadp_core::dyncore::io::load_dataset;
use dadp_core::dyncore::{generate_dataset, grid_domains, EnvId, EnvState};
use dadp_core::encoder::{ContextWindow, EncoderBundle, EncoderConfig, EncoderNorm};
use dadp_core::mixdiff::{train_policy, PolicyConfig};
use dadp_core::nn::Rng;
use dadp_core::rollout::{Agent, PolicyAgent, StepInput};
use dadp_ffi::*;
use serde_json::json;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dadp_last_error_message()) }.to_str().unwrap().to_string()
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn dataset_generate_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = cpath(&dir.path().join("d.bin"));
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(dadp_dataset_generate(1, 2, 3, 24, 5, &mut ds), DadpStatus::Ok);
        let (mut d, mut t) = (0usize, 0usize);
        assert_eq!(dadp_dataset_counts(ds, &mut d, &mut t), DadpStatus::Ok);
        assert_eq!((d, t), (4, 12));
        assert_eq!(dadp_dataset_save(ds, path.as_ptr()), DadpStatus::Ok);
        dadp_dataset_free(ds);

        let mut back = ptr::null_mut();
        assert_eq!(dadp_dataset_load(path.as_ptr(), &mut back), DadpStatus::Ok);
        dadp_dataset_free(back);
    }
    let direct = generate_dataset(EnvId::Push1D, &grid_domains(EnvId::Push1D, 2), 3, 24, 5).unwrap();
    assert_eq!(load_dataset(&dir.path().join("d.bin")).unwrap(), direct.quantized());
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(dadp_dataset_generate(7, 2, 3, 24, 0, &mut ds), DadpStatus::Io);
        assert!(ds.is_null());
        assert_eq!(dadp_dataset_generate(1, 2, 1, 24, 0, &mut ds), DadpStatus::InvalidArgument);
        assert!(last_error().contains("episodes"), "{}", last_error());
        let missing = CString::new("/nonexistent/d.bin").unwrap();
        assert_eq!(dadp_dataset_load(missing.as_ptr(), &mut ds), DadpStatus::Io);
        assert_eq!(dadp_dataset_load(ptr::null(), &mut ds), DadpStatus::NullPointer);
        dadp_dataset_free(ptr::null_mut());
        dadp_encoder_free(ptr::null_mut());
        dadp_policy_free(ptr::null_mut());
    }
}

#[test]
fn fit_g_matches_core() {
    let y = [10.0, 9.0, 7.5];
    let (mut g, mut v) = (0.0, 0.0);
    assert_eq!(unsafe { dadp_balldrop_fit_g(y.as_ptr(), 1.0, &mut g, &mut v) }, DadpStatus::Ok);
    assert_eq!((g, v), dadp_core::dyncore::fit_g_from_context(y, 1.0));
    assert_eq!(unsafe { dadp_balldrop_fit_g(y.as_ptr(), 0.0, &mut g, &mut v) }, DadpStatus::InvalidArgument);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(dadp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn encoder_and_policy_match_core() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_dataset(EnvId::Push1D, &grid_domains(EnvId::Push1D, 2), 3, 24, 1).unwrap();
    let eps: Vec<_> = ds.iter().map(|(_, _, t)| t).collect();
    let ecfg = EncoderConfig {
        hidden: vec![8],
        head_hidden: vec![8],
        ..Default::default()
    };
    let enc = EncoderBundle::new(EnvId::Push1D, &ecfg, EncoderNorm::fit(&eps, 16), &mut Rng::new(2));
    let enc_path = dir.path().join("e.ckpt");
    enc.to_checkpoint(json!({})).save(&enc_path).unwrap();
    let pcfg = PolicyConfig {
        hidden: vec![16],
        iterations: 20,
        batch_size: 8,
        ..Default::default()
    };
    let (pol, _) = train_policy(&ds, &enc, "e", &pcfg, 0).unwrap();
    let pol_path = dir.path().join("p.ckpt");
    pol.to_checkpoint(json!({})).save(&pol_path).unwrap();

    // reload through the file so both sides use the stored precision
    let enc = EncoderBundle::from_checkpoint(&dadp_core::nn::Checkpoint::load(&enc_path).unwrap()).unwrap();
    let pol =
        dadp_core::mixdiff::DiffusionPolicy::from_checkpoint(&dadp_core::nn::Checkpoint::load(&pol_path).unwrap()).unwrap();

    let traj = &ds.episodes[1][0];
    let steps = 5;
    let obs: Vec<f64> = (0..steps).map(|t| traj.obs(t)[0]).collect();
    let acts: Vec<f64> = (0..steps).map(|t| traj.action(t)[0]).collect();
    let mut expected_ctx = ContextWindow::padding(16, 1, 1);
    for k in 0..steps {
        expected_ctx.set_row(16 - steps + k, &[obs[k]], &[acts[k]]);
    }

    unsafe {
        let mut e = ptr::null_mut();
        assert_eq!(dadp_encoder_load(cpath(&enc_path).as_ptr(), &mut e), DadpStatus::Ok);
        let (mut h, mut zd) = (0usize, 0usize);
        assert_eq!(dadp_encoder_dims(e, &mut h, &mut zd), DadpStatus::Ok);
        assert_eq!((h, zd), (16, 2));
        let mut z = vec![0.0; zd];
        assert_eq!(
            dadp_encoder_encode(e, obs.as_ptr(), acts.as_ptr(), steps, z.as_mut_ptr(), zd),
            DadpStatus::Ok
        );
        assert_eq!(z, enc.encode(&expected_ctx).unwrap());
        assert_eq!(
            dadp_encoder_encode(e, obs.as_ptr(), acts.as_ptr(), steps, z.as_mut_ptr(), 3),
            DadpStatus::InvalidArgument
        );

        let mut p = ptr::null_mut();
        assert_eq!(dadp_policy_load(cpath(&pol_path).as_ptr(), &mut p), DadpStatus::Ok);
        let current = traj.obs(steps)[0];
        let mut u = f64::NAN;
        assert_eq!(
            dadp_policy_act(p, e, obs.as_ptr(), acts.as_ptr(), steps, current, 9, &mut u),
            DadpStatus::Ok
        );
        let input = StepInput {
            t: steps,
            obs: &[current],
            state: EnvState::new(current, 0.0),
            history: &expected_ctx,
            context: &expected_ctx,
        };
        let direct = PolicyAgent { policy: &pol, encoder: &enc }.act(&input, &mut Rng::new(9)).unwrap();
        assert_eq!(u, direct[0]);

        // encoder checkpoint in place of a policy
        let mut wrong = ptr::null_mut();
        assert_eq!(dadp_policy_load(cpath(&enc_path).as_ptr(), &mut wrong), DadpStatus::Io);
        dadp_policy_free(p);
        dadp_encoder_free(e);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dadp.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for opaque in ["DadpDataset", "DadpEncoder", "DadpPolicy"] {
        assert!(header.contains(&format!("typedef struct {opaque} {opaque};")));
    }
}

#[test]
fn c_program_links_against_static_library() {
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libdadp_ffi.a");
    if !lib.exists() || std::process::Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = std::process::Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
