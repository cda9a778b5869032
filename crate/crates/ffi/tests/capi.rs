use std::ffi::CStr;
use std::ptr;

use featreg::geometry::Homography;
use featreg::synth::warped_pair;
use featreg_ffi::*;

fn to_handle(img: &featreg::imaging::Image) -> *mut FrImage {
    let mut out = ptr::null_mut();
    let s = unsafe {
        fr_image_from_pixels(
            img.width(),
            img.height(),
            img.channels(),
            img.data().as_ptr(),
            &mut out,
        )
    };
    assert_eq!(s, FrStatus::Ok);
    out
}

#[test]
fn pipeline_recovers_translation() {
    let h = Homography::translation(6.0, -4.0);
    let (a, b) = warped_pair(160, 160, 120, 11, &h);
    let (ia, ib) = (to_handle(&a), to_handle(&b));
    unsafe {
        let mut params = fr_detector_params_default();
        params.max_keypoints = 300;
        let (mut ka, mut kb) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(fr_detect(ia, &params, &mut ka), FrStatus::Ok);
        assert_eq!(fr_detect(ib, &params, &mut kb), FrStatus::Ok);
        assert!(fr_keypoints_len(ka) > 10);

        let (mut da, mut db) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(fr_describe_raw(ia, ka, 16, 24.0, &mut da), FrStatus::Ok);
        assert_eq!(fr_describe_raw(ib, kb, 16, 24.0, &mut db), FrStatus::Ok);
        assert_eq!(fr_descriptors_dim(da), 256);

        let mut m = ptr::null_mut();
        assert_eq!(
            fr_match(da, db, c"cosine".as_ptr(), c"nnr1".as_ptr(), 1.1, &mut m),
            FrStatus::Ok
        );
        assert!(fr_matches_len(m) >= 4);
        let mut first = FrMatch {
            idx_a: 0,
            idx_b: 0,
            d1: 0.0,
            d2: 0.0,
        };
        assert_eq!(fr_matches_get(m, 0, &mut first), FrStatus::Ok);
        assert!(first.d1 <= first.d2);

        let mut hm = [0.0; 9];
        let mut inliers = 0usize;
        assert_eq!(
            fr_ransac(da, db, m, ptr::null(), hm.as_mut_ptr(), &mut inliers),
            FrStatus::Ok
        );
        assert!(inliers >= 4);
        let (mut x, mut y) = (0.0, 0.0);
        assert_eq!(
            fr_homography_apply(hm.as_ptr(), 80.0, 80.0, &mut x, &mut y),
            FrStatus::Ok
        );
        assert!(
            (x - 86.0).abs() < 0.5 && (y - 76.0).abs() < 0.5,
            "({x}, {y})"
        );

        fr_matches_free(m);
        fr_descriptors_free(da);
        fr_descriptors_free(db);
        fr_keypoints_free(ka);
        fr_keypoints_free(kb);
        fr_image_free(ia);
        fr_image_free(ib);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut img = ptr::null_mut();
        assert_eq!(
            fr_image_load(c"/nonexistent/img.pgm".as_ptr(), &mut img),
            FrStatus::Io
        );
        let msg = CStr::from_ptr(fr_last_error()).to_str().unwrap();
        assert!(msg.contains("/nonexistent/img.pgm"));
        assert!(img.is_null());

        let px = [0.5; 4];
        assert_eq!(
            fr_image_from_pixels(2, 2, 1, px.as_ptr(), &mut img),
            FrStatus::Ok
        );
        let mut kps = ptr::null_mut();
        assert_eq!(
            fr_detect(img, ptr::null(), &mut kps),
            FrStatus::InvalidArgument
        );
        assert!(!fr_last_error().is_null());
        fr_image_free(img);

        let mut out = ptr::null_mut();
        assert_eq!(
            fr_match(
                ptr::null(),
                ptr::null(),
                c"cosine".as_ptr(),
                c"nn1".as_ptr(),
                0.5,
                &mut out
            ),
            FrStatus::NullPointer
        );
        fr_matches_free(ptr::null_mut());
        fr_image_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/featreg.h")).unwrap();
    for sym in [
        "fr_last_error",
        "fr_detector_params_default",
        "fr_ransac_params_default",
        "fr_image_load",
        "fr_image_from_pixels",
        "fr_image_size",
        "fr_image_free",
        "fr_detect",
        "fr_keypoints_len",
        "fr_keypoints_get",
        "fr_keypoints_free",
        "fr_describe_raw",
        "fr_descriptors_len",
        "fr_descriptors_dim",
        "fr_descriptors_keypoint",
        "fr_descriptors_free",
        "fr_match",
        "fr_matches_len",
        "fr_matches_get",
        "fr_matches_free",
        "fr_ransac",
        "fr_homography_apply",
        "typedef struct FrImage FrImage",
        "FR_STATUS_NO_CONSENSUS = 6",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}
