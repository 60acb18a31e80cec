use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use nrstream_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let n = unsafe { nrs_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n < buf.len());
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn small(mode: NrsMode, ell: u64) -> *mut NrsParams {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { nrs_params_new(4, 4, ell, 1, mode, &mut p) }, NrsStatus::Ok);
    p
}

fn encode(p: *const NrsParams, x: &[u8]) -> *mut NrsStream {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nrs_encode(p, x.as_ptr(), x.len(), &mut s) }, NrsStatus::Ok, "{}", last_error());
    s
}

#[test]
fn lengths_match_desk() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { nrs_params_desk(NrsMode::Linear, &mut p) }, NrsStatus::Ok);
    assert_eq!(unsafe { nrs_params_m_len(p) }, 536_870_912);
    assert_eq!(unsafe { nrs_params_copy_bits(p) }, 32768);
    unsafe { nrs_params_free(p) };
    assert_eq!(unsafe { nrs_params_m_len(ptr::null()) }, 0);
    let v = unsafe { CStr::from_ptr(nrs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn bad_parameters_report_config() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { nrs_params_new(12, 4, 4, 1, NrsMode::Linear, &mut p) }, NrsStatus::Config);
    assert!(p.is_null());
    assert!(last_error().contains("r^D"), "{}", last_error());
    assert_eq!(unsafe { nrs_params_new(4, 4, 4, 1, NrsMode::Linear, ptr::null_mut()) }, NrsStatus::NullArgument);
}

#[test]
fn clean_and_noisy_decode() {
    let x = [1u8, 1, 0, 1];
    let p = small(NrsMode::Linear, 2);
    let s = encode(p, &x);
    let mut expected = 0;
    assert_eq!(
        unsafe { nrs_reference(NrsAlgorithm::Parity, x.as_ptr(), 4, ptr::null(), 0, 0, &mut expected) },
        NrsStatus::Ok
    );
    assert_eq!(expected, 1);

    let mut r = NrsDecodeResult::default();
    assert_eq!(unsafe { nrs_decode(s, NrsAlgorithm::Parity, ptr::null(), 0, 0, 5, &mut r) }, NrsStatus::Ok);
    assert_eq!(r.value, 1);
    assert_eq!((r.conf_num, r.conf_den), (1, 4));
    assert_eq!(r.bits_read, unsafe { nrs_params_m_len(p) });

    let mut flips = 0;
    let st = unsafe { nrs_stream_corrupt(s, NrsChannel::Random, 1, 20, 1, 8, 9, &mut flips) };
    assert_eq!(st, NrsStatus::Ok, "{}", last_error());
    assert!(flips > 0);
    let ok = (0..20)
        .filter(|&seed| {
            let mut r = NrsDecodeResult::default();
            assert_eq!(unsafe { nrs_decode(s, NrsAlgorithm::Parity, ptr::null(), 0, 0, seed, &mut r) }, NrsStatus::Ok);
            r.value == expected
        })
        .count();
    assert!(ok >= 18, "{ok}/20");
    unsafe {
        nrs_stream_free(s);
        nrs_params_free(p);
    }
}

#[test]
fn over_budget_is_refused() {
    let p = small(NrsMode::Linear, 2);
    let s = encode(p, &[0, 1, 0, 0]);
    let st = unsafe { nrs_stream_corrupt(s, NrsChannel::PrefixBurst, 1, 5, 1, 8, 0, ptr::null_mut()) };
    assert_eq!(st, NrsStatus::OverBudget);
    assert!(last_error().contains("budget"), "{}", last_error());
    let st = unsafe { nrs_stream_corrupt(s, NrsChannel::PrefixBurst, 1, 0, 1, 8, 0, ptr::null_mut()) };
    assert_eq!(st, NrsStatus::InvalidArgument);
    unsafe {
        nrs_stream_free(s);
        nrs_params_free(p);
    }
}

#[test]
fn general_mode_and_linear_only_algorithms() {
    let x = [1u8, 1, 0, 1];
    let p = small(NrsMode::General, 4);
    let s = encode(p, &x);
    let mut r = NrsDecodeResult::default();
    assert_eq!(unsafe { nrs_decode(s, NrsAlgorithm::Dfa, ptr::null(), 0, 0, 1, &mut r) }, NrsStatus::Ok);
    assert_eq!(r.value, 0);
    unsafe {
        nrs_stream_free(s);
        nrs_params_free(p);
    }

    let p = small(NrsMode::Linear, 2);
    let s = encode(p, &x);
    assert_eq!(unsafe { nrs_decode(s, NrsAlgorithm::Dfa, ptr::null(), 0, 0, 1, &mut r) }, NrsStatus::Decode);
    let y = [0u8, 0, 1, 1];
    assert_eq!(unsafe { nrs_decode(s, NrsAlgorithm::Dot, y.as_ptr(), 4, 0, 1, &mut r) }, NrsStatus::Ok);
    assert_eq!(r.value, 1);
    assert_eq!(unsafe { nrs_decode(s, NrsAlgorithm::Dot, ptr::null(), 0, 0, 1, &mut r) }, NrsStatus::InvalidArgument);
    unsafe {
        nrs_stream_free(s);
        nrs_params_free(p);
    }
}

#[test]
fn wrong_input_length_is_config() {
    let p = small(NrsMode::Linear, 2);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nrs_encode(p, [1u8; 3].as_ptr(), 3, &mut s) }, NrsStatus::Config);
    assert!(s.is_null());
    unsafe { nrs_params_free(p) };
}

#[test]
fn header_declares_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/nrstream.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build script");
    for name in [
        "nrs_params_new",
        "nrs_params_desk",
        "nrs_params_free",
        "nrs_encode",
        "nrs_stream_corrupt",
        "nrs_decode",
        "nrs_reference",
        "nrs_last_error",
        "typedef struct NrsParams NrsParams",
        "typedef struct NrsStream NrsStream",
        "NRS_STATUS_OVER_BUDGET",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"nrstream.h\"\nint main(void) {\n  NrsParams *p = 0;\n  \
         NrsStatus s = nrs_params_desk(NRS_MODE_LINEAR, &p);\n  nrs_params_free(p);\n  return (int)s;\n}\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .expect("C compiler available");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
