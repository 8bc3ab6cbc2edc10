//! C ABI over the `mcbm` crate.
//!
//! Every entry point returns an [`McbmStatus`]; results travel through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`mcbm_last_error_message`]. Datasets, models and rankings are opaque
//! handles that must be released with their matching `*_free` function.
//! Panics never cross the boundary; they surface as `MCBM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use mcbm::data::{generate_synthetic, load_concept_dataset, Dataset, DatasetFormat, LoadOptions, SyntheticSpec};
use mcbm::info::{mrmr_rank, mutual_information, MrmrOptions};
use mcbm::intervene::{fit_geometric_decay, intervene_prefix};
use mcbm::model::{
    init_model, train, EfficientTraining, LossConfig, MatryoshkaModel, ModelMode, NestingSchedule, TrainingMode,
};
use mcbm::theory::{expected_cost_bound, regime_classify, Regime, RegimeParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McbmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    EmptyDataset = 4,
    Spec = 5,
    Shape = 6,
    UnsupportedLevel = 7,
    TrainingDiverged = 8,
    Fit = 9,
    Capacity = 10,
    Io = 11,
    Json = 12,
    Csv = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McbmRegime {
    Efficient = 0,
    Balanced = 1,
    HeavyTailed = 2,
}

/// Parameters of the planted synthetic generator.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct McbmSyntheticSpec {
    pub levels: usize,
    pub base_size: usize,
    pub growth_rate: f64,
    pub decay_rate: f64,
    pub classes: usize,
    pub samples: usize,
    pub redundancy_copies: usize,
    pub noise: f64,
    pub feature_noise: f64,
    /// 0 selects the default of `2K`.
    pub feature_dim: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct McbmTrainConfig {
    pub efficient: bool,
    pub sequential: bool,
    /// Efficient mode only: one random level per batch.
    pub random_level: bool,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

pub struct McbmDataset(Dataset);
pub struct McbmModel(MatryoshkaModel);
pub struct McbmRanking(Vec<usize>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: McbmStatus,
    message: String,
}

impl Failure {
    fn new(status: McbmStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<mcbm::Error> for Failure {
    fn from(e: mcbm::Error) -> Self {
        use mcbm::Error as E;
        let status = match &e {
            E::Parse { .. } => McbmStatus::Parse,
            E::EmptyDataset => McbmStatus::EmptyDataset,
            E::Spec(_) => McbmStatus::Spec,
            E::Shape(_) => McbmStatus::Shape,
            E::UnsupportedLevel { .. } => McbmStatus::UnsupportedLevel,
            E::TrainingDiverged { .. } => McbmStatus::TrainingDiverged,
            E::Fit(_) => McbmStatus::Fit,
            E::Capacity(_) => McbmStatus::Capacity,
            E::Io { .. } => McbmStatus::Io,
            E::Json(_) => McbmStatus::Json,
            E::Csv(_) => McbmStatus::Csv,
        };
        Failure::new(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> McbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            McbmStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            McbmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(McbmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn string(ptr: *const c_char, what: &str) -> FfiResult<String> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::new(McbmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> FfiResult<&'a T> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn copy_into(dst: &mut [f64], src: &[f64]) -> FfiResult<()> {
    if dst.len() < src.len() {
        return Err(Failure::new(
            McbmStatus::BufferTooSmall,
            format!("buffer holds {} values, need {}", dst.len(), src.len()),
        ));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(v) => v,
    Err(_) => panic!("version string"),
};

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcbm_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mcbm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------- datasets

/// Loads a dataset. `format` is `"csv"` or `"cub"`.
///
/// # Safety
/// `path` and `format` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcbm_dataset_load(
    path: *const c_char,
    format: *const c_char,
    out: *mut *mut McbmDataset,
) -> McbmStatus {
    guard(|| {
        let path = PathBuf::from(string(path, "path")?);
        let format: DatasetFormat = string(format, "format")?.parse()?;
        let ds = load_concept_dataset(path, format, &LoadOptions::default())?;
        write_out(out, Box::into_raw(Box::new(McbmDataset(ds))), "out")
    })
}

/// Generates a planted synthetic dataset.
///
/// # Safety
/// `spec` must point to a valid struct; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcbm_dataset_generate(
    spec: *const McbmSyntheticSpec,
    out: *mut *mut McbmDataset,
) -> McbmStatus {
    guard(|| {
        let s = handle(spec, "spec")?;
        let spec = SyntheticSpec {
            levels: s.levels,
            base_size: s.base_size,
            growth_rate: s.growth_rate,
            decay_rate: s.decay_rate,
            classes: s.classes,
            samples: s.samples,
            redundancy_copies: s.redundancy_copies,
            noise: s.noise,
            seed: s.seed,
            feature_dim: (s.feature_dim > 0).then_some(s.feature_dim),
            feature_noise: s.feature_noise,
        };
        let data = generate_synthetic(&spec)?;
        write_out(out, Box::into_raw(Box::new(McbmDataset(data.dataset))), "out")
    })
}

/// Writes `N`, `K`, `F` and `C`. Any out pointer may be NULL.
///
/// # Safety
/// `dataset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcbm_dataset_shape(
    dataset: *const McbmDataset,
    samples: *mut usize,
    concepts: *mut usize,
    features: *mut usize,
    classes: *mut usize,
) -> McbmStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.0;
        for (ptr, v) in [
            (samples, ds.n_samples()),
            (concepts, ds.n_concepts()),
            (features, ds.n_features()),
            (classes, ds.class_count()),
        ] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and not be freed twice. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mcbm_dataset_free(dataset: *mut McbmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

// ---------------------------------------------------------------- information

/// Plug-in mutual information of two discrete sequences, in nats.
///
/// # Safety
/// `x` and `y` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mcbm_mutual_information(
    x: *const i64,
    y: *const i64,
    len: usize,
    out: *mut f64,
) -> McbmStatus {
    guard(|| {
        let x = slice(x, len, "x")?;
        let y = slice(y, len, "y")?;
        let mi = mutual_information(x, y)?;
        write_out(out, mi.value, "out")
    })
}

/// Greedy mRMR ordering of all concepts of `dataset`.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcbm_rank(dataset: *const McbmDataset, out: *mut *mut McbmRanking) -> McbmStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.0;
        let ranking = mrmr_rank(ds, &MrmrOptions::default())?;
        write_out(out, Box::into_raw(Box::new(McbmRanking(ranking.into_order()))), "out")
    })
}

/// # Safety
/// `ranking` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcbm_ranking_len(ranking: *const McbmRanking, out: *mut usize) -> McbmStatus {
    guard(|| write_out(out, handle(ranking, "ranking")?.0.len(), "out"))
}

/// Copies the 0-based concept order into `buffer`.
///
/// # Safety
/// `buffer` must have room for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn mcbm_ranking_order(
    ranking: *const McbmRanking,
    buffer: *mut usize,
    capacity: usize,
) -> McbmStatus {
    guard(|| {
        let order = &handle(ranking, "ranking")?.0;
        if capacity < order.len() {
            return Err(Failure::new(
                McbmStatus::BufferTooSmall,
                format!("buffer holds {capacity} values, need {}", order.len()),
            ));
        }
        slice_mut(buffer, order.len(), "buffer")?.copy_from_slice(order);
        Ok(())
    })
}

/// # Safety
/// `ranking` must come from this library and not be freed twice. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mcbm_ranking_free(ranking: *mut McbmRanking) {
    if !ranking.is_null() {
        drop(Box::from_raw(ranking));
    }
}

// ---------------------------------------------------------------- models

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcbm_model_load(path: *const c_char, out: *mut *mut McbmModel) -> McbmStatus {
    guard(|| {
        let model = MatryoshkaModel::load(PathBuf::from(string(path, "path")?))?;
        write_out(out, Box::into_raw(Box::new(McbmModel(model))), "out")
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcbm_model_save(model: *const McbmModel, path: *const c_char) -> McbmStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        model.save(PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// Trains a model on `dataset` with its mRMR concept order.
///
/// `levels` lists the nesting schedule; the last entry must equal `K`.
///
/// # Safety
/// `levels` must hold `n_levels` values; `config` must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcbm_model_train(
    dataset: *const McbmDataset,
    levels: *const usize,
    n_levels: usize,
    config: *const McbmTrainConfig,
    out: *mut *mut McbmModel,
) -> McbmStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.0;
        let cfg = handle(config, "config")?;
        if ds.n_features() == 0 {
            return Err(Failure::new(McbmStatus::Shape, "dataset has no input features"));
        }
        let schedule = NestingSchedule::new(slice(levels, n_levels, "levels")?.to_vec(), ds.n_concepts())?;
        let order = mrmr_rank(ds, &MrmrOptions::default())?.into_order();
        let mode = if cfg.efficient {
            ModelMode::Efficient
        } else {
            ModelMode::Standard
        };
        let init = init_model(
            ds.n_features(),
            ds.n_concepts(),
            ds.class_count(),
            schedule,
            mode,
            order,
            cfg.seed,
        )?;
        let loss = LossConfig {
            alpha: cfg.alpha,
            lambdas: None,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            efficient_training: if cfg.random_level {
                EfficientTraining::RandomLevel
            } else {
                EfficientTraining::AllLevels
            },
            training_mode: if cfg.sequential {
                TrainingMode::Sequential
            } else {
                TrainingMode::Joint
            },
            seed: cfg.seed,
        };
        let empty = ds.subset(&[]);
        let (model, _) = train(&init, ds, &empty, &loss)?;
        write_out(out, Box::into_raw(Box::new(McbmModel(model))), "out")
    })
}

/// Writes `F`, `K` and `C`. Any out pointer may be NULL.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcbm_model_shape(
    model: *const McbmModel,
    features: *mut usize,
    concepts: *mut usize,
    classes: *mut usize,
) -> McbmStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        for (ptr, v) in [
            (features, m.n_features()),
            (concepts, m.n_concepts()),
            (classes, m.n_classes()),
        ] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

/// Concept probabilities of one input row, in the model's mRMR order.
///
/// # Safety
/// `x` must hold `n_features` values and `probs` room for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn mcbm_model_forward(
    model: *const McbmModel,
    x: *const f64,
    n_features: usize,
    probs: *mut f64,
    capacity: usize,
) -> McbmStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let p = m.concept_probs(slice(x, n_features, "x")?)?;
        copy_into(slice_mut(probs, capacity, "probs")?, &p)
    })
}

/// Class probabilities from the first `level` ordered concepts.
///
/// # Safety
/// `concepts` must hold `n_concepts` values and `out` room for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn mcbm_model_predict_at(
    model: *const McbmModel,
    concepts: *const f64,
    n_concepts: usize,
    level: usize,
    out: *mut f64,
    capacity: usize,
) -> McbmStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let p = m.predict_at(slice(concepts, n_concepts, "concepts")?, level)?;
        copy_into(slice_mut(out, capacity, "out")?, &p)
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mcbm_model_free(model: *mut McbmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------- intervention and theory

/// Replaces the first `k` probabilities with the 0/1 ground truth.
///
/// # Safety
/// `probs`, `truth` and `out` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mcbm_intervene_prefix(
    probs: *const f64,
    truth: *const u8,
    len: usize,
    k: usize,
    out: *mut f64,
) -> McbmStatus {
    guard(|| {
        let v = intervene_prefix(slice(probs, len, "probs")?, slice(truth, len, "truth")?, k)?;
        slice_mut(out, len, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Cost regime of growth `r` and decay `gamma`. `alpha` receives
/// `1 + ln gamma / ln r` in the heavy-tailed regime and NaN otherwise.
///
/// # Safety
/// `regime` must be writable; `alpha` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mcbm_regime_classify(
    growth_rate: f64,
    decay_rate: f64,
    regime: *mut McbmRegime,
    alpha: *mut f64,
) -> McbmStatus {
    guard(|| {
        let c = regime_classify(growth_rate, decay_rate)?;
        let r = match c.regime {
            Regime::Efficient => McbmRegime::Efficient,
            Regime::Balanced => McbmRegime::Balanced,
            Regime::HeavyTailed => McbmRegime::HeavyTailed,
        };
        write_out(regime, r, "regime")?;
        if !alpha.is_null() {
            alpha.write(c.alpha.unwrap_or(f64::NAN));
        }
        Ok(())
    })
}

/// Closed-form upper bound on the expected intervention cost.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcbm_expected_cost_bound(
    growth_rate: f64,
    decay_rate: f64,
    base_size: f64,
    levels: usize,
    norm_const: f64,
    out: *mut f64,
) -> McbmStatus {
    guard(|| {
        let params = RegimeParams {
            growth_rate,
            decay_rate,
            base_size,
            levels,
            norm_const,
        };
        write_out(out, expected_cost_bound(&params)?, "out")
    })
}

/// Geometric fit of a level histogram. Any out pointer may be NULL.
///
/// # Safety
/// `counts` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mcbm_fit_geometric_decay(
    counts: *const f64,
    len: usize,
    gamma_hat: *mut f64,
    r_squared: *mut f64,
    c_hat: *mut f64,
) -> McbmStatus {
    guard(|| {
        let fit = fit_geometric_decay(slice(counts, len, "counts")?)?;
        for (ptr, v) in [
            (gamma_hat, fit.gamma_hat),
            (r_squared, fit.r_squared),
            (c_hat, fit.c_hat),
        ] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}
