//! C ABI over the `dyrect` library.
//!
//! Objects are exposed as opaque handles that the caller owns and releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`DyrectStatus`]; on failure a message is available from
//! [`dyrect_last_error`] on the same thread until the next failing call.
//!
//! Arrays cross the boundary as `double` buffers with explicit lengths.
//! Volumes are stored x-fastest; projections as `[view][row][col]`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dyrect::analysis::{mae_transition, MaskPolicy};
use dyrect::dyrect::reconstruct_dyrect;
use dyrect::projector::forward_project;
use dyrect::{io, AcquisitionGeometry, Beam, Error, EventVolume, ProjectionSet, ReconParams, ScalarField3, VoxelGrid3};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DyrectStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    GeometryMismatch = 3,
    Format = 4,
    Io = 5,
    Numerical = 6,
    Panic = 7,
}

/// Per-voxel event model: initial and final attenuation and transition time.
pub struct DyrectVolume {
    inner: EventVolume,
}

/// Scan geometry with view angles and timestamps.
pub struct DyrectGeometry {
    inner: AcquisitionGeometry,
}

/// Stack of projection images with their geometry.
pub struct DyrectProjections {
    inner: ProjectionSet,
}

/// Reconstruction parameters. Obtain defaults from [`dyrect_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DyrectParams {
    pub lambda_t: f64,
    pub lambda_0: f64,
    pub lambda_1: f64,
    pub lambda_delta: f64,
    pub lambda_mu: f64,
    /// Values <= 0 select the automatic epsilon.
    pub epsilon: f64,
    pub n_iterations: usize,
    pub n_subsets: usize,
    pub rng_seed: u64,
    pub use_weights: bool,
    pub weight_floor: f64,
    pub ray_step: f64,
    pub fit_attenuations: bool,
}

impl From<ReconParams> for DyrectParams {
    fn from(p: ReconParams) -> Self {
        Self {
            lambda_t: p.lambda_t,
            lambda_0: p.lambda_0,
            lambda_1: p.lambda_1,
            lambda_delta: p.lambda_delta,
            lambda_mu: p.lambda_mu,
            epsilon: p.epsilon.unwrap_or(0.0),
            n_iterations: p.n_iterations,
            n_subsets: p.n_subsets,
            rng_seed: p.rng_seed,
            use_weights: p.use_weights,
            weight_floor: p.weight_floor,
            ray_step: p.ray_step,
            fit_attenuations: p.fit_attenuations,
        }
    }
}

impl From<DyrectParams> for ReconParams {
    fn from(p: DyrectParams) -> Self {
        Self {
            lambda_t: p.lambda_t,
            lambda_0: p.lambda_0,
            lambda_1: p.lambda_1,
            lambda_delta: p.lambda_delta,
            lambda_mu: p.lambda_mu,
            epsilon: (p.epsilon > 0.0).then_some(p.epsilon),
            n_iterations: p.n_iterations,
            n_subsets: p.n_subsets,
            rng_seed: p.rng_seed,
            use_weights: p.use_weights,
            weight_floor: p.weight_floor,
            ray_step: p.ray_step,
            fit_attenuations: p.fit_attenuations,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DyrectStatus {
    match e {
        Error::InvalidInput(_) => DyrectStatus::InvalidInput,
        Error::GeometryMismatch(_) => DyrectStatus::GeometryMismatch,
        Error::Format { .. } => DyrectStatus::Format,
        Error::Io { .. } => DyrectStatus::Io,
        Error::Numerical(_) => DyrectStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DyrectStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DyrectStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            DyrectStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_owned());
            DyrectStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Error::InvalidInput(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("output buffer"));
    }
    if len != src.len() {
        return Err(Error::InvalidInput(format!("buffer holds {len} values, {} needed", src.len())).into());
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(src);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dyrect_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dyrect_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn dyrect_params_default() -> DyrectParams {
    ReconParams::default().into()
}

/// Circular parallel-beam scan of `n_views` views, `projections_per_rotation`
/// per turn, starting at `start_angle_rad`.
#[no_mangle]
pub unsafe extern "C" fn dyrect_geometry_parallel(
    det_rows: usize,
    det_cols: usize,
    pixel_pitch_mm: f64,
    projections_per_rotation: usize,
    n_views: usize,
    start_angle_rad: f64,
    out: *mut *mut DyrectGeometry,
) -> DyrectStatus {
    guard(|| {
        let inner = AcquisitionGeometry::circular(
            Beam::Parallel,
            0.0,
            det_rows,
            det_cols,
            pixel_pitch_mm,
            projections_per_rotation,
            n_views,
            start_angle_rad,
        )?;
        put(out, DyrectGeometry { inner })
    })
}

/// Circular cone-beam scan; distances in mm.
#[no_mangle]
pub unsafe extern "C" fn dyrect_geometry_cone(
    source_to_origin_mm: f64,
    origin_to_detector_mm: f64,
    det_rows: usize,
    det_cols: usize,
    pixel_pitch_mm: f64,
    projections_per_rotation: usize,
    n_views: usize,
    start_angle_rad: f64,
    out: *mut *mut DyrectGeometry,
) -> DyrectStatus {
    guard(|| {
        let inner = AcquisitionGeometry::circular(
            Beam::Cone { source_to_origin: source_to_origin_mm },
            origin_to_detector_mm,
            det_rows,
            det_cols,
            pixel_pitch_mm,
            projections_per_rotation,
            n_views,
            start_angle_rad,
        )?;
        put(out, DyrectGeometry { inner })
    })
}

#[no_mangle]
pub unsafe extern "C" fn dyrect_geometry_n_views(geometry: *const DyrectGeometry) -> usize {
    geometry.as_ref().map_or(0, |g| g.inner.n_views())
}

#[no_mangle]
pub unsafe extern "C" fn dyrect_geometry_free(geometry: *mut DyrectGeometry) {
    if !geometry.is_null() {
        drop(Box::from_raw(geometry));
    }
}

/// Event volume on an `nx * ny * nz` grid centred on the origin. Each array
/// holds `nx * ny * nz` values, x fastest.
#[no_mangle]
pub unsafe extern "C" fn dyrect_volume_new(
    nx: usize,
    ny: usize,
    nz: usize,
    voxel_size_mm: f64,
    mu0: *const f64,
    mu1: *const f64,
    tstar: *const f64,
    out: *mut *mut DyrectVolume,
) -> DyrectStatus {
    guard(|| {
        let grid = VoxelGrid3::centered(nx, ny, nz, voxel_size_mm)?;
        let n = grid.len();
        let field = |p, what| -> Result<ScalarField3, Failure> {
            Ok(ScalarField3::from_values(grid, slice(p, n, what)?.to_vec())?)
        };
        let inner = EventVolume::new(field(mu0, "mu0")?, field(mu1, "mu1")?, field(tstar, "tstar")?)?;
        put(out, DyrectVolume { inner })
    })
}

/// Reads the `<stem>_mu0/_mu1/_tstar.raw` triple.
#[no_mangle]
pub unsafe extern "C" fn dyrect_volume_read(stem: *const c_char, out: *mut *mut DyrectVolume) -> DyrectStatus {
    guard(|| {
        let inner = io::read_event_volume(&path(stem, "stem")?)?;
        put(out, DyrectVolume { inner })
    })
}

#[no_mangle]
pub unsafe extern "C" fn dyrect_volume_write(volume: *const DyrectVolume, stem: *const c_char) -> DyrectStatus {
    guard(|| {
        let v = deref(volume, "volume")?;
        io::write_event_volume(&path(stem, "stem")?, &v.inner)?;
        Ok(())
    })
}

/// Number of voxels, or 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn dyrect_volume_len(volume: *const DyrectVolume) -> usize {
    volume.as_ref().map_or(0, |v| v.inner.grid().len())
}

/// Copies the three parameter arrays; any output pointer may be NULL to skip it.
#[no_mangle]
pub unsafe extern "C" fn dyrect_volume_copy(
    volume: *const DyrectVolume,
    mu0: *mut f64,
    mu1: *mut f64,
    tstar: *mut f64,
    len: usize,
) -> DyrectStatus {
    guard(|| {
        let v = &deref(volume, "volume")?.inner;
        for (src, dst) in [(&v.mu0, mu0), (&v.mu1, mu1), (&v.tstar, tstar)] {
            if !dst.is_null() {
                copy_out(src.values(), dst, len)?;
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dyrect_volume_free(volume: *mut DyrectVolume) {
    if !volume.is_null() {
        drop(Box::from_raw(volume));
    }
}

/// Time-resolved forward projection of `volume` in `geometry`.
#[no_mangle]
pub unsafe extern "C" fn dyrect_forward_project(
    volume: *const DyrectVolume,
    geometry: *const DyrectGeometry,
    ray_step: f64,
    out: *mut *mut DyrectProjections,
) -> DyrectStatus {
    guard(|| {
        let v = deref(volume, "volume")?;
        let g = deref(geometry, "geometry")?;
        if !(ray_step > 0.0 && ray_step.is_finite()) {
            return Err(Error::InvalidInput("ray step must be > 0".into()).into());
        }
        let inner = forward_project(&v.inner, &g.inner, ray_step, None);
        put(out, DyrectProjections { inner })
    })
}

/// Wraps caller data (`n_views * det_rows * det_cols` values) as projections.
#[no_mangle]
pub unsafe extern "C" fn dyrect_projections_new(
    geometry: *const DyrectGeometry,
    data: *const f64,
    len: usize,
    out: *mut *mut DyrectProjections,
) -> DyrectStatus {
    guard(|| {
        let g = deref(geometry, "geometry")?;
        let inner = ProjectionSet::from_data(g.inner.clone(), slice(data, len, "data")?.to_vec())?;
        put(out, DyrectProjections { inner })
    })
}

#[no_mangle]
pub unsafe extern "C" fn dyrect_projections_read(
    path_: *const c_char,
    out: *mut *mut DyrectProjections,
) -> DyrectStatus {
    guard(|| {
        let inner = io::read_projections(&path(path_, "path")?)?;
        put(out, DyrectProjections { inner })
    })
}

#[no_mangle]
pub unsafe extern "C" fn dyrect_projections_write(
    projections: *const DyrectProjections,
    path_: *const c_char,
) -> DyrectStatus {
    guard(|| {
        let p = deref(projections, "projections")?;
        io::write_projections(&path(path_, "path")?, &p.inner)?;
        Ok(())
    })
}

/// Number of stored values, or 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn dyrect_projections_len(projections: *const DyrectProjections) -> usize {
    projections.as_ref().map_or(0, |p| p.inner.data().len())
}

#[no_mangle]
pub unsafe extern "C" fn dyrect_projections_copy(
    projections: *const DyrectProjections,
    out: *mut f64,
    len: usize,
) -> DyrectStatus {
    guard(|| copy_out(deref(projections, "projections")?.inner.data(), out, len))
}

#[no_mangle]
pub unsafe extern "C" fn dyrect_projections_free(projections: *mut DyrectProjections) {
    if !projections.is_null() {
        drop(Box::from_raw(projections));
    }
}

/// Event-based reconstruction starting from `init`. `params` may be NULL for
/// defaults.
#[no_mangle]
pub unsafe extern "C" fn dyrect_reconstruct(
    measured: *const DyrectProjections,
    params: *const DyrectParams,
    init: *const DyrectVolume,
    out: *mut *mut DyrectVolume,
) -> DyrectStatus {
    guard(|| {
        let m = deref(measured, "measured")?;
        let i = deref(init, "init")?;
        let p: ReconParams = params.as_ref().map_or_else(ReconParams::default, |p| (*p).into());
        let result = reconstruct_dyrect(&m.inner, &p, &i.inner, None)?;
        put(out, DyrectVolume { inner: result.volume })
    })
}

/// Mean absolute transition-time error (rotations) over voxels whose
/// attenuation change is at least half the largest one in `truth`.
#[no_mangle]
pub unsafe extern "C" fn dyrect_mae_transition(
    truth: *const DyrectVolume,
    reconstruction: *const DyrectVolume,
    out: *mut f64,
) -> DyrectStatus {
    guard(|| {
        let t = deref(truth, "truth")?;
        let r = deref(reconstruction, "reconstruction")?;
        if out.is_null() {
            return Err(Failure::Null("output value"));
        }
        *out = mae_transition(&t.inner, &r.inner, MaskPolicy::default())?;
        Ok(())
    })
}
