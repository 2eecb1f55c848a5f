//! C ABI over the `vaelf` library.
//!
//! Objects cross the boundary as opaque pointers (`VaelfTensor`, `VaelfSplit`,
//! `VaelfModel`) that the caller releases with the matching `*_free`.
//! Every fallible function returns a [`VaelfStatus`]; on failure the message
//! is available from [`vaelf_last_error`] on the same thread. Panics are
//! caught and reported as `VAELF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use vaelf::checkpoint;
use vaelf::data::{generate_synthetic, EntrySplit, HdiTensor, Position};
use vaelf::eval;
use vaelf::trainer::{self, TrainConfig};
use vaelf::vae::{AdamState, MuActivation, VaeParams};
use vaelf::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VaelfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    OutOfRange = 4,
    NonFinite = 5,
    Io = 6,
    Checkpoint = 7,
    Config = 8,
    Training = 9,
    Panic = 99,
}

impl From<&Error> for VaelfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch(_) => VaelfStatus::DimensionMismatch,
            Error::InvalidArgument(_) | Error::Normalization(_) => VaelfStatus::InvalidArgument,
            Error::NonFiniteValue { .. } => VaelfStatus::NonFinite,
            Error::OutOfRange(_) => VaelfStatus::OutOfRange,
            Error::NonFiniteLoss { .. } | Error::Diverged(_) => VaelfStatus::Training,
            Error::Checkpoint(_) => VaelfStatus::Checkpoint,
            Error::Config(_) | Error::Json(_) => VaelfStatus::Config,
            Error::Io { .. } | Error::Parse { .. } => VaelfStatus::Io,
        }
    }
}

/// A k × N × M tensor with its observation mask.
pub struct VaelfTensor(HdiTensor);

/// A train/valid/test partition of a tensor's observed entries.
pub struct VaelfSplit(EntrySplit);

/// Trained VAE parameters plus optimizer state.
pub struct VaelfModel {
    params: VaeParams,
    adam: AdamState,
    seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VaelfPosition {
    pub channel: usize,
    pub day: usize,
    pub slot: usize,
}

impl From<VaelfPosition> for Position {
    fn from(p: VaelfPosition) -> Self {
        Position::new(p.channel, p.day, p.slot)
    }
}

/// Training hyperparameters; fill with [`vaelf_train_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VaelfTrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub patience: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Non-zero selects a ReLU μ head instead of identity.
    pub relu_mu: u8,
    pub kl_weight: f64,
}

impl From<TrainConfig> for VaelfTrainConfig {
    fn from(c: TrainConfig) -> Self {
        Self {
            epochs_max: c.epochs_max,
            batch_size: c.batch_size,
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            eps_adam: c.eps_adam,
            patience: c.patience,
            seed: c.seed,
            hidden_dim: c.hidden_dim,
            latent_dim: c.latent_dim,
            relu_mu: (c.mu_activation == MuActivation::Relu) as u8,
            kl_weight: c.kl_weight,
        }
    }
}

impl From<VaelfTrainConfig> for TrainConfig {
    fn from(c: VaelfTrainConfig) -> Self {
        TrainConfig {
            epochs_max: c.epochs_max,
            batch_size: c.batch_size,
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            eps_adam: c.eps_adam,
            patience: c.patience,
            seed: c.seed,
            hidden_dim: c.hidden_dim,
            latent_dim: c.latent_dim,
            mu_activation: if c.relu_mu != 0 {
                MuActivation::Relu
            } else {
                MuActivation::Identity
            },
            kl_weight: c.kl_weight,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, translating errors and panics into a status code.
fn guard<F>(f: F) -> VaelfStatus
where
    F: FnOnce() -> Result<(), (VaelfStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VaelfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            VaelfStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (VaelfStatus, String)>;

fn lib<T>(r: vaelf::Result<T>) -> FfiResult<T> {
    r.map_err(|e| (VaelfStatus::from(&e), e.to_string()))
}

fn null(name: &str) -> (VaelfStatus, String) {
    (VaelfStatus::NullPointer, format!("{name} is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn input<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, name: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn path_arg<'a>(p: *const c_char) -> FfiResult<&'a Path> {
    let s = deref(p, "path")?;
    let s = CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (VaelfStatus::InvalidArgument, "path is not valid UTF-8".to_string()))?;
    Ok(Path::new(s))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vaelf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vaelf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Synthetic smart-meter tensor with the default channel profiles.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_synthetic(
    k: usize,
    n_days: usize,
    m_slots: usize,
    seed: u64,
    out: *mut *mut VaelfTensor,
) -> VaelfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let t = lib(generate_synthetic(k, n_days, m_slots, seed))?;
        *out = boxed(VaelfTensor(t));
        Ok(())
    })
}

/// Tensor from dense storage-order arrays (channel, then day, then slot).
/// `observed` may be null, meaning every entry is observed.
///
/// # Safety
/// `values` must hold `k * n_days * m_slots` doubles and `observed`, when
/// non-null, as many bytes.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_from_dense(
    k: usize,
    n_days: usize,
    m_slots: usize,
    values: *const f64,
    observed: *const u8,
    out: *mut *mut VaelfTensor,
) -> VaelfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let total = k
            .checked_mul(n_days)
            .and_then(|v| v.checked_mul(m_slots))
            .ok_or((VaelfStatus::InvalidArgument, "dimensions overflow".to_string()))?;
        let values = input(values, total, "values")?.to_vec();
        let observed = if observed.is_null() {
            vec![true; total]
        } else {
            input(observed, total, "observed")?.iter().map(|&b| b != 0).collect()
        };
        let t = lib(HdiTensor::from_dense(k, n_days, m_slots, values, observed))?;
        *out = boxed(VaelfTensor(t));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_free(t: *mut VaelfTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live tensor handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_dims(
    t: *const VaelfTensor,
    k: *mut usize,
    n_days: *mut usize,
    m_slots: *mut usize,
) -> VaelfStatus {
    guard(|| {
        let t = &deref(t, "tensor")?.0;
        for (p, v) in [(k, t.k()), (n_days, t.n_days()), (m_slots, t.m_slots())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `t` must be a live tensor handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_observed_count(t: *const VaelfTensor, out: *mut usize) -> VaelfStatus {
    guard(|| {
        let t = &deref(t, "tensor")?.0;
        *out_ref(out, "out")? = t.observed_count();
        Ok(())
    })
}

/// Stored value at one cell. `*observed` is set to 0 for missing cells, in
/// which case `*value` is 0.
///
/// # Safety
/// `t` must be a live tensor handle; `value` and `observed` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_get(
    t: *const VaelfTensor,
    pos: VaelfPosition,
    value: *mut f64,
    observed: *mut u8,
) -> VaelfStatus {
    guard(|| {
        let t = &deref(t, "tensor")?.0;
        let value = out_ref(value, "value")?;
        let observed = out_ref(observed, "observed")?;
        let p = Position::from(pos);
        lib(t.check_position(p))?;
        let v = t.get(p);
        *observed = v.is_some() as u8;
        *value = v.unwrap_or(0.0);
        Ok(())
    })
}

/// Copy keeping ⌊density · kNM⌋ of the observed entries.
///
/// # Safety
/// `t` must be a live tensor handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_apply_sparsity(
    t: *const VaelfTensor,
    density: f64,
    seed: u64,
    out: *mut *mut VaelfTensor,
) -> VaelfStatus {
    guard(|| {
        let t = &deref(t, "tensor")?.0;
        let out = out_ref(out, "out")?;
        *out = boxed(VaelfTensor(lib(t.apply_sparsity(density, seed))?));
        Ok(())
    })
}

/// Per-channel min-max normalized copy.
///
/// # Safety
/// `t` must be a live tensor handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_normalize(t: *const VaelfTensor, out: *mut *mut VaelfTensor) -> VaelfStatus {
    guard(|| {
        let t = &deref(t, "tensor")?.0;
        let out = out_ref(out, "out")?;
        *out = boxed(VaelfTensor(lib(t.normalize())?));
        Ok(())
    })
}

/// Maps normalized values of one channel back to raw units, in place.
///
/// # Safety
/// `t` must be a live normalized tensor; `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vaelf_tensor_denormalize(
    t: *const VaelfTensor,
    channel: usize,
    values: *mut f64,
    len: usize,
) -> VaelfStatus {
    guard(|| {
        let t = &deref(t, "tensor")?.0;
        for v in output(values, len, "values")? {
            *v = lib(t.denormalize_value(channel, *v))?;
        }
        Ok(())
    })
}

/// 60/20/20 partition of the observed entries.
///
/// # Safety
/// `t` must be a live tensor handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_split_new(t: *const VaelfTensor, seed: u64, out: *mut *mut VaelfSplit) -> VaelfStatus {
    guard(|| {
        let t = &deref(t, "tensor")?.0;
        let out = out_ref(out, "out")?;
        *out = boxed(VaelfSplit(lib(t.split_entries(seed))?));
        Ok(())
    })
}

/// # Safety
/// `s` must be a live split handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn vaelf_split_sizes(
    s: *const VaelfSplit,
    train: *mut usize,
    valid: *mut usize,
    test: *mut usize,
) -> VaelfStatus {
    guard(|| {
        let (a, b, c) = deref(s, "split")?.0.sizes();
        for (p, v) in [(train, a), (valid, b), (test, c)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies up to `cap` test positions into `out` and stores the total count
/// in `len`. Pass `cap = 0` to query the count.
///
/// # Safety
/// `s` must be a live split handle; `out` must hold `cap` positions.
#[no_mangle]
pub unsafe extern "C" fn vaelf_split_test_positions(
    s: *const VaelfSplit,
    out: *mut VaelfPosition,
    cap: usize,
    len: *mut usize,
) -> VaelfStatus {
    guard(|| {
        let test = &deref(s, "split")?.0.test;
        *out_ref(len, "len")? = test.len();
        let n = cap.min(test.len());
        for (dst, p) in output(out, n, "out")?.iter_mut().zip(test) {
            *dst = VaelfPosition {
                channel: p.channel,
                day: p.day,
                slot: p.slot,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vaelf_split_free(s: *mut VaelfSplit) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_train_config_default(out: *mut VaelfTrainConfig) -> VaelfStatus {
    guard(|| {
        *out_ref(out, "out")? = TrainConfig::default().into();
        Ok(())
    })
}

/// Trains a VAE on the training split of a normalized tensor, keeping the
/// epoch with the best validation RMSE. `best_epoch` may be null.
///
/// # Safety
/// All handles must be live; `cfg` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vaelf_train(
    t: *const VaelfTensor,
    s: *const VaelfSplit,
    cfg: *const VaelfTrainConfig,
    out: *mut *mut VaelfModel,
    best_epoch: *mut usize,
) -> VaelfStatus {
    guard(|| {
        let t = &deref(t, "tensor")?.0;
        let s = &deref(s, "split")?.0;
        let cfg: TrainConfig = (*deref(cfg, "cfg")?).into();
        let out = out_ref(out, "out")?;
        let outcome = lib(trainer::train(t, s, &cfg))?;
        if let Some(b) = best_epoch.as_mut() {
            *b = outcome.best_epoch;
        }
        *out = boxed(VaelfModel {
            params: outcome.params,
            adam: outcome.adam,
            seed: cfg.seed,
        });
        Ok(())
    })
}

/// Predictions at `len` positions, with the encoder fed every observed
/// entry of `t`.
///
/// # Safety
/// Handles must be live; `positions` and `values` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn vaelf_model_predict(
    m: *const VaelfModel,
    t: *const VaelfTensor,
    positions: *const VaelfPosition,
    len: usize,
    values: *mut f64,
) -> VaelfStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let t = &deref(t, "tensor")?.0;
        let ps: Vec<Position> = input(positions, len, "positions")?.iter().map(|&p| p.into()).collect();
        let out = output(values, len, "values")?;
        let pred = lib(trainer::predict_at(&m.params, t, &ps))?;
        out.copy_from_slice(&pred);
        Ok(())
    })
}

/// Test-split RMSE and MAE on the normalized scale. The test entries are
/// hidden from the encoder.
///
/// # Safety
/// Handles must be live; `rmse` and `mae` may be null.
#[no_mangle]
pub unsafe extern "C" fn vaelf_model_evaluate_test(
    m: *const VaelfModel,
    t: *const VaelfTensor,
    s: *const VaelfSplit,
    rmse: *mut f64,
    mae: *mut f64,
) -> VaelfStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let t = &deref(t, "tensor")?.0;
        let s = &deref(s, "split")?.0;
        let report = lib(eval::evaluate_model(
            "vae-lf",
            "ffi",
            t,
            s,
            eval::Scale::Normalized,
            |ps| trainer::predict_at(&m.params, &t.without(&s.test)?, ps),
        ))?;
        if let Some(r) = rmse.as_mut() {
            *r = report.rmse;
        }
        if let Some(a) = mae.as_mut() {
            *a = report.mae;
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be a live model handle and `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn vaelf_model_save(m: *const VaelfModel, path: *const c_char) -> VaelfStatus {
    guard(|| {
        let m = deref(m, "model")?;
        lib(checkpoint::save_vae(path_arg(path)?, &m.params, &m.adam, m.seed))
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_model_load(path: *const c_char, out: *mut *mut VaelfModel) -> VaelfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ck = lib(checkpoint::load_vae(path_arg(path)?))?;
        *out = boxed(VaelfModel {
            params: ck.params,
            adam: ck.adam,
            seed: ck.seed,
        });
        Ok(())
    })
}

/// # Safety
/// `m` must be a live model handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn vaelf_model_dims(
    m: *const VaelfModel,
    input_dim: *mut usize,
    hidden_dim: *mut usize,
    latent_dim: *mut usize,
) -> VaelfStatus {
    guard(|| {
        let p = &deref(m, "model")?.params;
        for (o, v) in [(input_dim, p.input_dim), (hidden_dim, p.hidden_dim), (latent_dim, p.latent_dim)] {
            if let Some(o) = o.as_mut() {
                *o = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vaelf_model_free(m: *mut VaelfModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `truth` and `pred` must hold `len` doubles; `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_rmse(truth: *const f64, pred: *const f64, len: usize, out: *mut f64) -> VaelfStatus {
    guard(|| {
        let v = lib(eval::rmse(input(truth, len, "truth")?, input(pred, len, "pred")?))?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// # Safety
/// `truth` and `pred` must hold `len` doubles; `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn vaelf_mae(truth: *const f64, pred: *const f64, len: usize, out: *mut f64) -> VaelfStatus {
    guard(|| {
        let v = lib(eval::mae(input(truth, len, "truth")?, input(pred, len, "pred")?))?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}
