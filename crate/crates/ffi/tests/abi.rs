use std::ffi::{CStr, CString};
use std::ptr;

use transhp::analysis::absorption_weights;
use transhp::dataset::ImageRecord;
use transhp::hierarchy::LabelHierarchy;
use transhp::model::{presets, save_checkpoint, TransHPModel};
use transhp::numerics::{Tape, Tensor};
use transhp_ffi::*;

fn cstr(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = transhp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn hierarchy_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.txt");
    let h = LabelHierarchy::uniform(3, 2).unwrap();
    h.save(&path).unwrap();
    let mut handle = ptr::null_mut();
    let st = unsafe { transhp_hierarchy_load(cstr(&path).as_ptr(), &mut handle) };
    assert_eq!(st, TranshpStatus::Ok);
    let (mut fine, mut levels) = (0, 0);
    assert_eq!(unsafe { transhp_hierarchy_shape(handle, &mut fine, &mut levels) }, TranshpStatus::Ok);
    assert_eq!((fine, levels), (6, 1));
    for f in 0..6 {
        let mut a = 99;
        assert_eq!(unsafe { transhp_hierarchy_ancestor(handle, f, 0, &mut a) }, TranshpStatus::Ok);
        assert_eq!(a, h.ancestor_of(f, 0).unwrap());
    }
    let mut a = 0;
    assert_eq!(unsafe { transhp_hierarchy_ancestor(handle, 6, 0, &mut a) }, TranshpStatus::InvalidArgument);
    assert!(last_error().contains('6'));
    unsafe { transhp_hierarchy_free(handle) };
}

#[test]
fn missing_file_and_null_pointers() {
    let mut handle = ptr::null_mut();
    let p = CString::new("/nonexistent/h.txt").unwrap();
    assert_eq!(unsafe { transhp_hierarchy_load(p.as_ptr(), &mut handle) }, TranshpStatus::Io);
    assert!(handle.is_null());
    assert!(last_error().contains("nonexistent"));
    assert_eq!(unsafe { transhp_hierarchy_load(ptr::null(), &mut handle) }, TranshpStatus::NullPointer);
    assert_eq!(unsafe { transhp_model_load(p.as_ptr(), ptr::null_mut()) }, TranshpStatus::NullPointer);
    unsafe { transhp_model_free(ptr::null_mut()) };
}

#[test]
fn model_forward_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    let h = LabelHierarchy::uniform(3, 2).unwrap();
    let model = TransHPModel::<f32>::assemble(presets::tiny_model(6, 3), &h, 4).unwrap();
    save_checkpoint(&path, &model).unwrap();

    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { transhp_model_load(cstr(&path).as_ptr(), &mut handle) }, TranshpStatus::Ok);
    let (mut size, mut fine) = (0, 0);
    assert_eq!(unsafe { transhp_model_shape(handle, &mut size, &mut fine) }, TranshpStatus::Ok);
    assert_eq!((size, fine), (16, 6));
    let (mut total, mut added) = (0, 0);
    assert_eq!(unsafe { transhp_model_count_params(handle, &mut total, &mut added) }, TranshpStatus::Ok);
    assert_eq!(total, model.count_params().total);
    assert_eq!(added, 2 * 3 * 16);

    let pixels: Vec<u8> = (0..2 * 3 * 16 * 16).map(|i| (i * 37 % 251) as u8).collect();
    let mut logits = vec![0f32; 12];
    let st = unsafe { transhp_model_forward(handle, pixels.as_ptr(), 2, logits.as_mut_ptr(), logits.len()) };
    assert_eq!(st, TranshpStatus::Ok);

    let recs: Vec<ImageRecord> = pixels
        .chunks(768)
        .map(|p| ImageRecord::new(0, 0, 16, p.to_vec()).unwrap())
        .collect();
    let refs: Vec<&ImageRecord> = recs.iter().collect();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let out = model.forward(&mut tape, &bound, &refs).unwrap();
    assert_eq!(tape.value(out.fine_logits).data(), &logits[..]);

    let st = unsafe { transhp_model_forward(handle, pixels.as_ptr(), 2, logits.as_mut_ptr(), 11) };
    assert_eq!(st, TranshpStatus::InvalidArgument);
    unsafe { transhp_model_free(handle) };
}

#[test]
fn absorption_weights_match_library() {
    let (heads, n, m) = (2, 3, 2);
    let t = n + m;
    let attn: Vec<f64> = (0..heads * t * t).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
    let mut out = vec![0.0; n * m];
    let st = unsafe { transhp_absorption_weights(attn.as_ptr(), heads, n, m, out.as_mut_ptr()) };
    assert_eq!(st, TranshpStatus::Ok);
    let want = absorption_weights(&Tensor::new([heads, t, t], attn).unwrap(), n, m).unwrap();
    assert_eq!(want.data(), &out[..]);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/transhp.h");
    for f in [
        "transhp_last_error",
        "transhp_hierarchy_load",
        "transhp_hierarchy_free",
        "transhp_hierarchy_shape",
        "transhp_hierarchy_ancestor",
        "transhp_model_load",
        "transhp_model_free",
        "transhp_model_shape",
        "transhp_model_count_params",
        "transhp_model_forward",
        "transhp_absorption_weights",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"transhp.h\"\n\
         int f(void) {\n\
           TranshpModel *m = 0;\n\
           size_t total, added;\n\
           TranshpStatus s = transhp_model_load(\"x\", &m);\n\
           if (s == TRANSHP_STATUS_OK) transhp_model_count_params(m, &total, &added);\n\
           transhp_model_free(m);\n\
           return transhp_last_error() != 0;\n\
         }\n",
    )
    .unwrap();
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler available; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
