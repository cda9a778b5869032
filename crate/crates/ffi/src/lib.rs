//! C ABI over the `featreg` pipeline.
//!
//! Every function returns an [`FrStatus`]. On failure a message is stored
//! per thread and can be read with [`fr_last_error`]. Handles are opaque and
//! must be released with the matching `*_free` function; passing NULL to a
//! free function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use featreg::descriptor::{describe_keypoints, Backend, DescribeParams, DescriptorSet};
use featreg::detector::{detect_keypoints, DetectorParams, Keypoint};
use featreg::distance::{distance_matrix, Metric};
use featreg::eval::matched_points;
use featreg::geometry::{ransac_homography, GeometryError, Homography, Point2, RansacParams};
use featreg::imaging::{load_image, to_grayscale, Image};
use featreg::matcher::{match_descriptors, MatchPair, MatchParams, Method};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Degenerate = 5,
    NoConsensus = 6,
    Panic = 7,
}

pub struct FrImage(Image);
pub struct FrKeypoints(Vec<Keypoint>);
pub struct FrDescriptors(DescriptorSet);
pub struct FrMatches(Vec<MatchPair>);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FrKeypoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub octave: u32,
    pub response: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FrMatch {
    pub idx_a: usize,
    pub idx_b: usize,
    pub d1: f64,
    pub d2: f64,
}

/// Zero for `max_octaves` or `max_keypoints` means unbounded.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FrDetectorParams {
    pub base_sigma: f64,
    pub scales_per_octave: u32,
    pub max_octaves: u32,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub max_keypoints: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FrRansacParams {
    pub max_iterations: u32,
    pub inlier_threshold: f64,
    pub min_inliers: u32,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: FrStatus, msg: impl Into<String>) -> FrStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> FrStatus) -> FrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(FrStatus::Panic, "internal panic"))
}

fn geometry_status(e: &GeometryError) -> FrStatus {
    match e {
        GeometryError::NoConsensus { .. } | GeometryError::InsufficientData(_) => {
            FrStatus::NoConsensus
        }
        GeometryError::InvalidParams(_) => FrStatus::InvalidArgument,
        GeometryError::Parse(_) => FrStatus::Format,
        _ => FrStatus::Degenerate,
    }
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, FrStatus> {
    if p.is_null() {
        return Err(fail(FrStatus::NullPointer, "string argument is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FrStatus::InvalidArgument, "string argument is not UTF-8"))
}

fn boxed<T>(out: *mut *mut T, value: T) -> FrStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    FrStatus::Ok
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(FrStatus::NullPointer, concat!(stringify!($p), " is NULL"));
        })+
    };
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next `fr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn fr_detector_params_default() -> FrDetectorParams {
    let d = DetectorParams::default();
    FrDetectorParams {
        base_sigma: d.base_sigma,
        scales_per_octave: d.scales_per_octave as u32,
        max_octaves: 0,
        contrast_threshold: d.contrast_threshold,
        edge_ratio: d.edge_ratio,
        max_keypoints: 0,
    }
}

#[no_mangle]
pub extern "C" fn fr_ransac_params_default() -> FrRansacParams {
    let r = RansacParams::default();
    FrRansacParams {
        max_iterations: r.max_iterations as u32,
        inlier_threshold: r.inlier_threshold,
        min_inliers: r.min_inliers as u32,
        seed: r.seed,
    }
}

/// Loads a PGM or PPM file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_image_load(path: *const c_char, out: *mut *mut FrImage) -> FrStatus {
    guard(|| {
        non_null!(out);
        let path = match c_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) => return fail(FrStatus::Io, format!("{path}: {e}")),
        };
        match load_image(&bytes) {
            Ok(img) => boxed(out, FrImage(img)),
            Err(e) => fail(FrStatus::Format, format!("{path}: {e}")),
        }
    })
}

/// Wraps `width * height * channels` interleaved intensities in `[0, 1]`.
///
/// # Safety
/// `data` must point to that many readable doubles.
#[no_mangle]
pub unsafe extern "C" fn fr_image_from_pixels(
    width: usize,
    height: usize,
    channels: usize,
    data: *const f64,
    out: *mut *mut FrImage,
) -> FrStatus {
    guard(|| {
        non_null!(data, out);
        let Some(len) = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
        else {
            return fail(FrStatus::InvalidArgument, "image size overflows");
        };
        let pixels = std::slice::from_raw_parts(data, len).to_vec();
        match Image::new(width, height, channels, pixels) {
            Ok(img) => boxed(out, FrImage(img)),
            Err(e) => fail(FrStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `img` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fr_image_size(
    img: *const FrImage,
    width: *mut usize,
    height: *mut usize,
    channels: *mut usize,
) -> FrStatus {
    guard(|| {
        non_null!(img, width, height, channels);
        let img = &(*img).0;
        *width = img.width();
        *height = img.height();
        *channels = img.channels();
        FrStatus::Ok
    })
}

/// # Safety
/// `img` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fr_image_free(img: *mut FrImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Detects keypoints on the grayscale version of `img`. `params` may be
/// NULL for defaults.
///
/// # Safety
/// Pointers must be valid or NULL where allowed.
#[no_mangle]
pub unsafe extern "C" fn fr_detect(
    img: *const FrImage,
    params: *const FrDetectorParams,
    out: *mut *mut FrKeypoints,
) -> FrStatus {
    guard(|| {
        non_null!(img, out);
        let p = if params.is_null() {
            fr_detector_params_default()
        } else {
            *params
        };
        let params = DetectorParams {
            base_sigma: p.base_sigma,
            scales_per_octave: p.scales_per_octave as usize,
            octaves: (p.max_octaves > 0).then_some(p.max_octaves as usize),
            contrast_threshold: p.contrast_threshold,
            edge_ratio: p.edge_ratio,
            max_keypoints: (p.max_keypoints > 0).then_some(p.max_keypoints as usize),
        };
        match detect_keypoints(&to_grayscale(&(*img).0), &params) {
            Ok(kps) => boxed(out, FrKeypoints(kps)),
            Err(e) => fail(FrStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `kps` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fr_keypoints_len(kps: *const FrKeypoints) -> usize {
    if kps.is_null() {
        0
    } else {
        (*kps).0.len()
    }
}

/// # Safety
/// `kps` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fr_keypoints_get(
    kps: *const FrKeypoints,
    index: usize,
    out: *mut FrKeypoint,
) -> FrStatus {
    guard(|| {
        non_null!(kps, out);
        let list = &(*kps).0;
        match list.get(index) {
            Some(k) => {
                *out = FrKeypoint {
                    x: k.x,
                    y: k.y,
                    sigma: k.sigma,
                    octave: k.octave as u32,
                    response: k.response,
                };
                FrStatus::Ok
            }
            None => fail(
                FrStatus::InvalidArgument,
                format!("keypoint index {index} out of range"),
            ),
        }
    })
}

/// # Safety
/// `kps` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fr_keypoints_free(kps: *mut FrKeypoints) {
    if !kps.is_null() {
        drop(Box::from_raw(kps));
    }
}

/// Raw normalized patches of side `side` from a window of `window` pixels
/// at the base scale. Keypoints whose window leaves the image are dropped.
///
/// # Safety
/// Pointers must be live handles.
#[no_mangle]
pub unsafe extern "C" fn fr_describe_raw(
    img: *const FrImage,
    kps: *const FrKeypoints,
    side: usize,
    window: f64,
    out: *mut *mut FrDescriptors,
) -> FrStatus {
    guard(|| {
        non_null!(img, kps, out);
        if side == 0 || window.is_nan() || window <= 0.0 {
            return fail(
                FrStatus::InvalidArgument,
                "side and window must be positive",
            );
        }
        let params = DescribeParams {
            window,
            ..DescribeParams::default()
        };
        match describe_keypoints(&(*img).0, &(*kps).0, Backend::RawPatch { side }, &params) {
            Ok(set) => boxed(out, FrDescriptors(set)),
            Err(e) => fail(FrStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `d` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fr_descriptors_len(d: *const FrDescriptors) -> usize {
    if d.is_null() {
        0
    } else {
        (*d).0.len()
    }
}

/// # Safety
/// `d` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fr_descriptors_dim(d: *const FrDescriptors) -> usize {
    if d.is_null() {
        0
    } else {
        (*d).0.dim
    }
}

/// Keypoint attached to descriptor row `index`.
///
/// # Safety
/// `d` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fr_descriptors_keypoint(
    d: *const FrDescriptors,
    index: usize,
    out: *mut FrKeypoint,
) -> FrStatus {
    guard(|| {
        non_null!(d, out);
        let list = &(*d).0.keypoints;
        match list.get(index) {
            Some(k) => {
                *out = FrKeypoint {
                    x: k.x,
                    y: k.y,
                    sigma: k.sigma,
                    octave: k.octave as u32,
                    response: k.response,
                };
                FrStatus::Ok
            }
            None => fail(
                FrStatus::InvalidArgument,
                format!("descriptor index {index} out of range"),
            ),
        }
    })
}

/// # Safety
/// `d` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fr_descriptors_free(d: *mut FrDescriptors) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Matches `a` against `b`. `metric` is one of cityblock, euclidean,
/// cosine, minkowski[:r], correlation; `method` one of nn1, nn2, nnr1, nnr2.
///
/// # Safety
/// Pointers must be live handles and NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fr_match(
    a: *const FrDescriptors,
    b: *const FrDescriptors,
    metric: *const c_char,
    method: *const c_char,
    threshold: f64,
    out: *mut *mut FrMatches,
) -> FrStatus {
    guard(|| {
        non_null!(a, b, out);
        let (metric, method) = match (c_str(metric), c_str(method)) {
            (Ok(m), Ok(t)) => (m, t),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let metric: Metric = match metric.parse() {
            Ok(m) => m,
            Err(e) => return fail(FrStatus::InvalidArgument, format!("{e}")),
        };
        let params = match method
            .parse::<Method>()
            .and_then(|m| MatchParams::new(m, threshold))
        {
            Ok(p) => p,
            Err(e) => return fail(FrStatus::InvalidArgument, e.to_string()),
        };
        let dm = match distance_matrix(&(*a).0, &(*b).0, metric) {
            Ok(d) => d,
            Err(e) => return fail(FrStatus::InvalidArgument, e.to_string()),
        };
        match match_descriptors(&dm, &params) {
            Ok(m) => boxed(out, FrMatches(m)),
            Err(e) => fail(FrStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fr_matches_len(m: *const FrMatches) -> usize {
    if m.is_null() {
        0
    } else {
        (*m).0.len()
    }
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fr_matches_get(
    m: *const FrMatches,
    index: usize,
    out: *mut FrMatch,
) -> FrStatus {
    guard(|| {
        non_null!(m, out);
        let list = &(*m).0;
        match list.get(index) {
            Some(p) => {
                *out = FrMatch {
                    idx_a: p.idx_a,
                    idx_b: p.idx_b,
                    d1: p.d1,
                    d2: p.d2,
                };
                FrStatus::Ok
            }
            None => fail(
                FrStatus::InvalidArgument,
                format!("match index {index} out of range"),
            ),
        }
    })
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fr_matches_free(m: *mut FrMatches) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Fits a homography from `a` to `b` over `matches`. Writes the row-major
/// matrix to `h_out[9]` and the inlier count to `inliers_out` (may be NULL).
/// `params` may be NULL for defaults.
///
/// # Safety
/// Pointers must be live handles; `h_out` must hold 9 doubles.
#[no_mangle]
pub unsafe extern "C" fn fr_ransac(
    a: *const FrDescriptors,
    b: *const FrDescriptors,
    matches: *const FrMatches,
    params: *const FrRansacParams,
    h_out: *mut f64,
    inliers_out: *mut usize,
) -> FrStatus {
    guard(|| {
        non_null!(a, b, matches, h_out);
        let p = if params.is_null() {
            fr_ransac_params_default()
        } else {
            *params
        };
        let params = RansacParams {
            max_iterations: p.max_iterations as usize,
            inlier_threshold: p.inlier_threshold,
            min_inliers: p.min_inliers as usize,
            seed: p.seed,
        };
        let pairs = match matched_points(&(*matches).0, &(*a).0.keypoints, &(*b).0.keypoints) {
            Ok(p) => p,
            Err(e) => return fail(FrStatus::InvalidArgument, e.to_string()),
        };
        match ransac_homography(&pairs, &params) {
            Ok(fit) => {
                std::slice::from_raw_parts_mut(h_out, 9)
                    .copy_from_slice(&fit.homography.to_array());
                if !inliers_out.is_null() {
                    *inliers_out = fit.inlier_count();
                }
                FrStatus::Ok
            }
            Err(e) => fail(geometry_status(&e), e.to_string()),
        }
    })
}

/// Maps `(x, y)` through the row-major homography `h[9]`.
///
/// # Safety
/// `h` must hold 9 doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn fr_homography_apply(
    h: *const f64,
    x: f64,
    y: f64,
    out_x: *mut f64,
    out_y: *mut f64,
) -> FrStatus {
    guard(|| {
        non_null!(h, out_x, out_y);
        let mut a = [0.0; 9];
        a.copy_from_slice(std::slice::from_raw_parts(h, 9));
        let h = match Homography::from_array(a) {
            Ok(h) => h,
            Err(e) => return fail(geometry_status(&e), e.to_string()),
        };
        match h.apply(Point2::new(x, y)) {
            Ok(p) => {
                *out_x = p.x;
                *out_y = p.y;
                FrStatus::Ok
            }
            Err(e) => fail(geometry_status(&e), e.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_out_pointer_sets_error() {
        let s = unsafe { fr_image_load(c"x.pgm".as_ptr(), ptr::null_mut()) };
        assert_eq!(s, FrStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(fr_last_error()) };
        assert!(msg.to_str().unwrap().contains("out"));
    }

    #[test]
    fn success_clears_error() {
        let mut x = 0.0;
        let mut y = 0.0;
        let bad = [0.0; 9];
        assert_ne!(
            unsafe { fr_homography_apply(bad.as_ptr(), 1.0, 1.0, &mut x, &mut y) },
            FrStatus::Ok
        );
        assert!(!fr_last_error().is_null());
        let id = [1.0, 0.0, 2.0, 0.0, 1.0, 3.0, 0.0, 0.0, 1.0];
        assert_eq!(
            unsafe { fr_homography_apply(id.as_ptr(), 1.0, 1.0, &mut x, &mut y) },
            FrStatus::Ok
        );
        assert!(fr_last_error().is_null());
        assert_eq!((x, y), (3.0, 4.0));
    }
}
