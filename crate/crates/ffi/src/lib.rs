//! C ABI over `dadp_core`.
//!
//! Objects live behind opaque handles created by `dadp_*_generate` or
//! `dadp_*_load` and released with the matching `dadp_*_free`. Every
//! fallible call returns a [`DadpStatus`]; on failure
//! [`dadp_last_error_message`] describes the most recent error of the
//! calling thread. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dadp_core::dyncore::io::{load_dataset, save_dataset};
use dadp_core::dyncore::{fit_g_from_context, generate_dataset, grid_domains, Dataset, EnvId, EnvState};
use dadp_core::encoder::{ContextWindow, EncoderBundle};
use dadp_core::mixdiff::DiffusionPolicy;
use dadp_core::nn::{Checkpoint, Rng};
use dadp_core::rollout::{Agent, PolicyAgent, StepInput};
use dadp_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DadpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Invalid configuration, dimensions or domain parameters.
    InvalidArgument = 2,
    /// Files or models that do not belong together.
    Lineage = 3,
    /// Non-finite values or a failed numerical routine.
    Numerical = 4,
    /// Unreadable, unwritable or malformed file.
    Io = 5,
    /// Internal failure; the library state is still consistent.
    Panic = 6,
}

/// Opaque expert dataset.
pub struct DadpDataset(Dataset);
/// Opaque trained context encoder.
pub struct DadpEncoder(EncoderBundle);
/// Opaque trained diffusion policy.
pub struct DadpPolicy(DiffusionPolicy);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(err: &Error) -> DadpStatus {
    match err.exit_code() {
        2 => DadpStatus::InvalidArgument,
        3 => DadpStatus::Lineage,
        4 => DadpStatus::Numerical,
        _ => DadpStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), DadpStatus>) -> DadpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DadpStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            DadpStatus::Panic
        }
    }
}

fn fail(err: Error) -> DadpStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> DadpStatus {
    set_error(format!("{what} is null"));
    DadpStatus::NullPointer
}

fn invalid(msg: impl Into<String>) -> DadpStatus {
    set_error(msg);
    DadpStatus::InvalidArgument
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, DadpStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], DadpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, DadpStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

fn env_of(code: u32) -> Result<EnvId, DadpStatus> {
    EnvId::from_code(code).map_err(fail)
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dadp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dadp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Expert dataset on a uniform grid of `grid_per_axis` points per
/// parameter. `env`: 0 BallDrop, 1 Push1D.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dadp_dataset_generate(
    env: u32,
    grid_per_axis: usize,
    episodes_per_domain: usize,
    episode_len: usize,
    seed: u64,
    out: *mut *mut DadpDataset,
) -> DadpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let env = env_of(env)?;
        if grid_per_axis == 0 {
            return Err(invalid("grid_per_axis must be >= 1"));
        }
        let grid = grid_domains(env, grid_per_axis);
        let ds = generate_dataset(env, &grid, episodes_per_domain, episode_len, seed).map_err(fail)?;
        *out = Box::into_raw(Box::new(DadpDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dadp_dataset_load(path: *const c_char, out: *mut *mut DadpDataset) -> DadpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = load_dataset(&path_arg(path)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(DadpDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dadp_dataset_save(ds: *const DadpDataset, path: *const c_char) -> DadpStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        save_dataset(&ds.0, &path_arg(path)?).map_err(fail)
    })
}

/// Number of domains and total number of trajectories.
///
/// # Safety
/// `ds` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dadp_dataset_counts(
    ds: *const DadpDataset,
    domains: *mut usize,
    trajectories: *mut usize,
) -> DadpStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let d = out_arg(domains, "domains")?;
        let t = out_arg(trajectories, "trajectories")?;
        *d = ds.0.domains.len();
        *t = ds.0.trajectory_count();
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn dadp_dataset_free(ds: *mut DadpDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn load_ck(path: PathBuf) -> Result<Checkpoint, DadpStatus> {
    Checkpoint::load(&path).map_err(fail)
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dadp_encoder_load(path: *const c_char, out: *mut *mut DadpEncoder) -> DadpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let bundle = EncoderBundle::from_checkpoint(&load_ck(path_arg(path)?)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(DadpEncoder(bundle)));
        Ok(())
    })
}

/// Context length and representation width of an encoder.
///
/// # Safety
/// `enc` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dadp_encoder_dims(enc: *const DadpEncoder, history: *mut usize, z_dim: *mut usize) -> DadpStatus {
    guard(|| {
        let enc = enc.as_ref().ok_or_else(|| null("encoder"))?;
        *out_arg(history, "history")? = enc.0.history;
        *out_arg(z_dim, "z_dim")? = enc.0.z_dim();
        Ok(())
    })
}

/// Context window from the `steps` most recent rows, oldest first, padded
/// at the start.
fn window(env: EnvId, history: usize, obs: &[f64], actions: &[f64], steps: usize) -> Result<ContextWindow, DadpStatus> {
    let (od, ad) = (env.obs_dim(), env.action_dim());
    if steps > history {
        return Err(invalid(format!("{steps} steps exceed the context length {history}")));
    }
    if obs.len() != steps * od || actions.len() != steps * ad {
        return Err(invalid("observation or action array length does not match the step count"));
    }
    let mut w = ContextWindow::padding(history, od, ad);
    let offset = history - steps;
    for k in 0..steps {
        w.set_row(offset + k, &obs[k * od..(k + 1) * od], &actions[k * ad..(k + 1) * ad]);
    }
    Ok(w)
}

/// Representation of a context of `steps` rows (`steps <= history`),
/// oldest first. `obs` holds `steps * obs_dim` values, `actions`
/// `steps * action_dim`; `z` receives `z_len == z_dim` values.
///
/// # Safety
/// Array pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dadp_encoder_encode(
    enc: *const DadpEncoder,
    obs: *const f64,
    actions: *const f64,
    steps: usize,
    z: *mut f64,
    z_len: usize,
) -> DadpStatus {
    guard(|| {
        let enc = enc.as_ref().ok_or_else(|| null("encoder"))?;
        let b = &enc.0;
        let (od, ad) = (b.env.obs_dim(), b.env.action_dim());
        let obs = slice_arg(obs, steps * od, "obs")?;
        let actions = slice_arg(actions, steps * ad, "actions")?;
        if z_len != b.z_dim() {
            return Err(invalid(format!("z buffer holds {z_len} values, encoder emits {}", b.z_dim())));
        }
        if z.is_null() {
            return Err(null("z"));
        }
        let w = window(b.env, b.history, obs, actions, steps)?;
        let out = b.encode(&w).map_err(fail)?;
        std::slice::from_raw_parts_mut(z, z_len).copy_from_slice(&out);
        Ok(())
    })
}

/// # Safety
/// `enc` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn dadp_encoder_free(enc: *mut DadpEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dadp_policy_load(path: *const c_char, out: *mut *mut DadpPolicy) -> DadpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = DiffusionPolicy::from_checkpoint(&load_ck(path_arg(path)?)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(DadpPolicy(p)));
        Ok(())
    })
}

/// Push1D action for the current observation given the `steps` completed
/// steps before it (oldest first, at most the policy history). The live
/// history also serves as the encoder context. `seed` fixes the sampler
/// noise.
///
/// # Safety
/// Handles must be live; array pointers valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dadp_policy_act(
    policy: *const DadpPolicy,
    encoder: *const DadpEncoder,
    history_obs: *const f64,
    history_actions: *const f64,
    steps: usize,
    current_obs: f64,
    seed: u64,
    action: *mut f64,
) -> DadpStatus {
    guard(|| {
        let policy = &policy.as_ref().ok_or_else(|| null("policy"))?.0;
        let encoder = &encoder.as_ref().ok_or_else(|| null("encoder"))?.0;
        let action = out_arg(action, "action")?;
        if encoder.env != EnvId::Push1D {
            return Err(invalid("policies act on Push1D only"));
        }
        if policy.spec.history != encoder.history {
            return Err(invalid("policy and encoder disagree on the history length"));
        }
        let obs = slice_arg(history_obs, steps, "history_obs")?;
        let acts = slice_arg(history_actions, steps, "history_actions")?;
        let live = window(EnvId::Push1D, policy.spec.history, obs, acts, steps)?;
        let current = [current_obs];
        let input = StepInput {
            t: steps,
            obs: &current,
            state: EnvState::new(current_obs, 0.0),
            history: &live,
            context: &live,
        };
        let agent = PolicyAgent { policy, encoder };
        let u = agent.act(&input, &mut Rng::new(seed)).map_err(fail)?;
        *action = u[0];
        Ok(())
    })
}

/// # Safety
/// `policy` must come from this library and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn dadp_policy_free(policy: *mut DadpPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Gravity and current speed from three consecutive positions
/// `y[T-2], y[T-1], y[T]` sampled `t0` apart.
///
/// # Safety
/// `y` must point to 3 values; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dadp_balldrop_fit_g(y: *const f64, t0: f64, g: *mut f64, v: *mut f64) -> DadpStatus {
    guard(|| {
        let y = slice_arg(y, 3, "y")?;
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(invalid("t0 must be positive"));
        }
        let (gg, vv) = fit_g_from_context([y[0], y[1], y[2]], t0);
        *out_arg(g, "g")? = gg;
        *out_arg(v, "v")? = vv;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn null_out_reported() {
        let s = unsafe { dadp_dataset_generate(1, 2, 2, 24, 0, ptr::null_mut()) };
        assert_eq!(s, DadpStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(dadp_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("out"));
    }
}
