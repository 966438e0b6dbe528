use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fic_core::{load_pgm, run_benchmark, save_pgm, BenchImage, EncoderConfig, GrayImage, SMode};
use tempfile::TempDir;

fn fic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.split_whitespace().find_map(|tok| {
        tok.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
    })
}

fn write_image(dir: &Path, name: &str, img: &GrayImage) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, save_pgm(img)).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn texture(n: usize) -> GrayImage {
    GrayImage::from_fn(n, n, |x, y| ((x * 7 + y * 13) % 97 + (x ^ y) % 31) as u8).unwrap()
}

#[test]
fn constant_image_round_trip() {
    let dir = TempDir::new().unwrap();
    let input = write_image(
        dir.path(),
        "flat.pgm",
        &GrayImage::filled(64, 48, 90).unwrap(),
    );
    let code = dir.path().join("flat.fic");
    let output = dir.path().join("flat_out.pgm");

    let enc = fic(&["encode", "-i", s(&input), "-o", s(&code)]);
    assert!(enc.status.success(), "{enc:?}");
    let text = stdout(&enc);
    assert_eq!(field(&text, "leaves_16"), Some("12"), "{text}");
    assert_eq!(field(&text, "leaves_2"), Some("0"), "{text}");

    let dec = fic(&["decode", "-i", s(&code), "-o", s(&output)]);
    assert!(dec.status.success(), "{dec:?}");
    let back = load_pgm(&std::fs::read(&output).unwrap()).unwrap();
    assert_eq!((back.width(), back.height()), (64, 48));
    assert!(back.data().iter().all(|&p| p.abs_diff(90) <= 1));
}

#[test]
fn single_thread_matches_default() {
    let dir = TempDir::new().unwrap();
    let input = write_image(dir.path(), "t.pgm", &texture(32));
    let a = dir.path().join("a.fic");
    let b = dir.path().join("b.fic");
    assert!(fic(&["encode", "-i", s(&input), "-o", s(&a)])
        .status
        .success());
    assert!(
        fic(&["--threads", "1", "encode", "-i", s(&input), "-o", s(&b)])
            .status
            .success()
    );
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn bench_rows_match_the_library() {
    let dir = TempDir::new().unwrap();
    let img = texture(32);
    let input = write_image(dir.path(), "t.pgm", &img);
    let csv = dir.path().join("bench.csv");
    let out = fic(&[
        "bench",
        "-i",
        s(&input),
        "--pool-sizes",
        "32",
        "--modes",
        "predefined,sampled10",
        "-o",
        s(&csv),
    ]);
    assert!(out.status.success(), "{out:?}");

    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "image,pool_size,mode,cr,seconds,psnr,leaves_16,leaves_8,leaves_4,leaves_2"
    );
    assert_eq!(lines.len(), 3);

    let expected = run_benchmark(
        &[BenchImage::new(s(&input).to_string(), img)],
        &[32],
        &[SMode::Predefined, SMode::Sampled10],
        &EncoderConfig::default(),
    );
    for (line, row) in lines[1..].iter().zip(&expected) {
        let cols: Vec<&str> = line.split(',').collect();
        let m = row.outcome.as_ref().unwrap();
        assert_eq!(cols[0], row.image);
        assert_eq!(cols[1], "32");
        assert_eq!(cols[2], row.mode.to_string());
        assert!(
            (cols[3].parse::<f64>().unwrap() - m.cr).abs() < 1e-3,
            "{line}"
        );
        let psnr: f64 = cols[5].parse().unwrap();
        assert!((psnr - m.psnr).abs() < 1e-3, "{line}");
        let leaves: Vec<usize> = cols[6..].iter().map(|c| c.parse().unwrap()).collect();
        assert_eq!(leaves, m.leaves);
    }
}

#[test]
fn info_describes_the_stream() {
    let dir = TempDir::new().unwrap();
    let input = write_image(dir.path(), "t.pgm", &texture(32));
    let code = dir.path().join("t.fic");
    assert!(
        fic(&["encode", "-i", s(&input), "-o", s(&code), "--s-mode", "ls"])
            .status
            .success()
    );
    let out = fic(&["info", "-i", s(&code)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("size=32x32"), "{text}");
    assert!(text.contains("s_mode=ls"), "{text}");
    let bytes = std::fs::metadata(&code).unwrap().len().to_string();
    assert_eq!(field(&text, "bytes"), Some(bytes.as_str()), "{text}");
}

#[test]
fn shist_writes_one_file_per_level() {
    let dir = TempDir::new().unwrap();
    let input = write_image(dir.path(), "t.pgm", &texture(64));
    let prefix = dir.path().join("hist");
    let out = fic(&["shist", "-i", s(&input), "-o", s(&prefix)]);
    assert!(out.status.success(), "{out:?}");
    for level in [16, 8, 4, 2] {
        let path = dir.path().join(format!("hist_{level}.csv"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some("bin_lo,bin_hi,count"));
        assert_eq!(text.lines().count(), 21);
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.fic");

    // usage
    assert_eq!(fic(&["encode"]).status.code(), Some(1));
    assert_eq!(
        fic(&["--threads", "0", "info", "-i", "x"]).status.code(),
        Some(1)
    );
    let flat = write_image(
        dir.path(),
        "flat.pgm",
        &GrayImage::filled(32, 32, 1).unwrap(),
    );
    let conflicting = fic(&[
        "encode",
        "-i",
        s(&flat),
        "-o",
        s(&out),
        "--pool-size",
        "8",
        "--min-entropy",
        "1",
    ]);
    assert_eq!(conflicting.status.code(), Some(1));
    assert_eq!(fic(&["--help"]).status.code(), Some(0));

    // io and parsing
    let missing = dir.path().join("missing.pgm");
    assert_eq!(
        fic(&["encode", "-i", s(&missing), "-o", s(&out)])
            .status
            .code(),
        Some(2)
    );
    let junk = dir.path().join("junk.pgm");
    std::fs::write(&junk, b"P2\n1 1\n255\n0").unwrap();
    assert_eq!(
        fic(&["encode", "-i", s(&junk), "-o", s(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        fic(&["decode", "-i", s(&junk), "-o", s(&out)])
            .status
            .code(),
        Some(2)
    );

    // codec: 20x20 does not tile into 16x16 ranges
    let odd = write_image(
        dir.path(),
        "odd.pgm",
        &GrayImage::filled(20, 20, 1).unwrap(),
    );
    assert_eq!(
        fic(&["encode", "-i", s(&odd), "-o", s(&out)]).status.code(),
        Some(3)
    );
}
