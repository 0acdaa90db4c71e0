use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use sce_core::contrastive::{infer_with_bank, ContrastiveModel};
use sce_core::data::{EventType, FrameSequence, LabelVocabulary};
use sce_core::encoders::{TextEncoderConfig, VideoEncoderConfig};
use sce_core::supervised::{forward_scores, SupervisedModel};
use sce_ffi::*;

fn video() -> VideoEncoderConfig {
    VideoEncoderConfig { height: 16, width: 16, token_dim: 4, hidden_dim: 4, embed_dim: 4, num_frames: 4, ..Default::default() }
}

fn clip_bytes(frames: usize, side: usize) -> Vec<u8> {
    (0..frames * side * side * 3).map(|i| (i * 37 % 251) as u8).collect()
}

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe { sce_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn event_model_matches_library_inference() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("event.ckpt");
    let model = SupervisedModel::new(video(), 4).unwrap();
    model.save(&path).unwrap();
    let bytes = clip_bytes(6, 16);
    let want = forward_scores(&model, &FrameSequence::new(bytes.clone(), 6, 16, 16, 15.0).unwrap()).unwrap();

    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { sce_event_model_load(cpath(&path).as_ptr(), &mut handle) }, SceStatus::Ok);
    let (mut scores, mut label) = ([0.0; SCE_EVENT_TYPE_COUNT], u32::MAX);
    let st = unsafe { sce_event_model_predict(handle, bytes.as_ptr(), 6, 16, 16, scores.as_mut_ptr(), &mut label) };
    assert_eq!(st, SceStatus::Ok);
    assert_eq!(scores, want.0);
    assert_eq!(label as usize, want.predict().index());

    let st = unsafe { sce_event_model_predict(handle, bytes.as_ptr(), 3, 8, 8, scores.as_mut_ptr(), &mut label) };
    assert_eq!(st, SceStatus::Artifact, "{}", last_error());
    unsafe { sce_event_model_free(handle) };
}

#[test]
fn conflict_model_scores_in_id_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("conflict.ckpt");
    let text = TextEncoderConfig { vocab_slots: 32, token_dim: 4, hidden_dim: 4, embed_dim: 4 };
    let model = ContrastiveModel::new(video(), text, 2).unwrap();
    model.save(&path).unwrap();
    let bytes = clip_bytes(5, 16);
    let bank = model.label_bank(&LabelVocabulary::standard()).unwrap();
    let want = infer_with_bank(&model, &bank, &FrameSequence::new(bytes.clone(), 5, 16, 16, 15.0).unwrap()).unwrap();

    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { sce_conflict_model_load(cpath(&path).as_ptr(), &mut handle) }, SceStatus::Ok);
    let (mut scores, mut label) = ([f64::NAN; SCE_TRAINABLE_LABEL_COUNT], 0u32);
    let st = unsafe { sce_conflict_model_predict(handle, bytes.as_ptr(), 5, 16, 16, scores.as_mut_ptr(), &mut label) };
    assert_eq!(st, SceStatus::Ok);
    assert_eq!(label, u32::from(want.label.0));
    for (id, s) in want.ranked {
        assert_eq!(scores[id.index()], s);
    }
    unsafe { sce_conflict_model_free(handle) };
}

#[test]
fn load_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut handle = ptr::null_mut();
    let missing = cpath(&dir.path().join("nope.ckpt"));
    assert_eq!(unsafe { sce_event_model_load(missing.as_ptr(), &mut handle) }, SceStatus::Io);
    assert!(last_error().contains("nope.ckpt"));
    assert!(handle.is_null());

    let path = dir.path().join("event.ckpt");
    SupervisedModel::new(video(), 0).unwrap().save(&path).unwrap();
    let mut conflict = ptr::null_mut();
    assert_eq!(unsafe { sce_conflict_model_load(cpath(&path).as_ptr(), &mut conflict) }, SceStatus::Artifact);

    assert_eq!(unsafe { sce_event_model_load(ptr::null(), &mut handle) }, SceStatus::NullPointer);
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { sce_event_model_load(bad.as_ptr().cast(), &mut handle) }, SceStatus::InvalidUtf8);
}

#[test]
fn static_names() {
    let text = |p: *const std::ffi::c_char| unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    assert_eq!(text(sce_label_text(1)), "Conflict with a lead vehicle");
    assert_eq!(text(sce_label_text(17)), "Unknown");
    assert!(sce_label_text(0).is_null() && sce_label_text(18).is_null());
    assert_eq!(text(sce_event_type_name(2)), "Near-Crash");
    assert!(sce_event_type_name(4).is_null());
    assert_eq!(text(sce_version()), env!("CARGO_PKG_VERSION"));
}

#[test]
fn text_metrics() {
    let a = CString::new("the lead car brakes").unwrap();
    let mut v = 0.0;
    assert_eq!(unsafe { sce_rouge_l_f1(a.as_ptr(), a.as_ptr(), &mut v) }, SceStatus::Ok);
    assert_eq!(v, 1.0);
    assert_eq!(unsafe { sce_meteor(a.as_ptr(), a.as_ptr(), &mut v) }, SceStatus::Ok);
    assert!((v - 0.9921875).abs() < 1e-12);
    let empty = CString::new("  ").unwrap();
    assert_eq!(unsafe { sce_meteor(empty.as_ptr(), a.as_ptr(), &mut v) }, SceStatus::InvalidArgument);
}

#[test]
fn mock_narrative_repeats_labels() {
    let bytes = clip_bytes(4, 16);
    let label = CString::new("Conflict with animal").unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe {
        sce_narrate_mock(
            1,
            SceStrategy::ChainOfThoughtRepeat as u32,
            bytes.as_ptr(),
            4,
            16,
            16,
            EventType::Crash.index() as u32,
            label.as_ptr(),
            &mut out,
        )
    };
    assert_eq!(st, SceStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { sce_string_free(out) };
    assert!(text.contains("Crash") && text.contains("Conflict with animal"), "{text}");

    let st = unsafe { sce_narrate_mock(1, 9, bytes.as_ptr(), 4, 16, 16, 0, label.as_ptr(), &mut out) };
    assert_eq!(st, SceStatus::InvalidArgument);
    let st = unsafe { sce_narrate_mock(1, 2, bytes.as_ptr(), 4, 16, 16, 0, ptr::null(), &mut out) };
    assert_eq!(st, SceStatus::Backend);
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I", include, "-"])
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::piped())
            .spawn()
            .and_then(|mut child| {
                use std::io::Write;
                child.stdin.take().unwrap().write_all(b"#include \"sce.h\"\nint main(void) { return sce_version() == 0; }\n")?;
                child.wait_with_output()
            })
            .expect("C compiler available");
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
