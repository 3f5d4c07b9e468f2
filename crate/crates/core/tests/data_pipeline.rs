mod common;

use common::{generate, rng};
use hqcm::data::{load_dataset, GrayImage, Split, Transform};
use rand::Rng;

/// Intensity-weighted centroid relative to the image centre.
fn centroid(plane: &[f32], size: usize) -> (f64, f64) {
    let mid = (size as f64 - 1.0) / 2.0;
    let mut total = 0.0;
    let (mut r, mut c) = (0.0, 0.0);
    for (i, &v) in plane.iter().enumerate() {
        let v = v as f64;
        total += v;
        r += v * ((i / size) as f64 - mid);
        c += v * ((i % size) as f64 - mid);
    }
    (r / total, c / total)
}

/// The same symmetry as a 2×2 matrix on centred `(row, col)` coordinates.
fn expected_centroid(t: Transform, (mut r, mut c): (f64, f64)) -> (f64, f64) {
    if t.hflip {
        c = -c;
    }
    if t.vflip {
        r = -r;
    }
    for _ in 0..t.rot90 {
        // counter-clockwise on screen, rows pointing down
        (r, c) = (-c, r);
    }
    (r, c)
}

#[test]
fn augmentation_moves_centroid_like_the_dihedral_group() {
    let mut r = rng(17);
    let size = 9;
    for _ in 0..20 {
        let plane: Vec<f32> = (0..size * size).map(|_| if r.random_bool(0.2) { r.random_range(0.1..1.0) } else { 0.0 }).collect();
        if plane.iter().all(|&v| v == 0.0) {
            continue;
        }
        let c0 = centroid(&plane, size);
        for t in Transform::all() {
            let got = centroid(&t.apply(&plane, size), size);
            let want = expected_centroid(t, c0);
            assert!((got.0 - want.0).abs() < 1e-9 && (got.1 - want.1).abs() < 1e-9, "{t:?}");
        }
    }
}

#[test]
fn augmented_images_and_masks_stay_aligned() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 40, 16, 3);
    let ds = load_dataset(dir.path(), None).unwrap();
    let idx = ds.indices(Split::Train);
    let ts: Vec<Transform> = (0..idx.len()).map(|k| Transform::all()[k % 16]).collect();
    let batch = ds.batch(&idx, Some(&ts)).unwrap();
    let masks = batch.masks.unwrap();
    for (k, &i) in idx.iter().enumerate() {
        let s = &ds.samples[i];
        assert_eq!(batch.images.batch_item(k), ts[k].apply(&s.image, 16).as_slice());
        assert_eq!(masks.batch_item(k), ts[k].apply(s.mask.as_ref().unwrap(), 16).as_slice());
    }
}

#[test]
fn splits_are_seventy_fifteen_fifteen_and_stratified() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 400, 16, 42);
    let ds = load_dataset(dir.path(), None).unwrap();
    let sizes: Vec<usize> = [Split::Train, Split::Val, Split::Test].iter().map(|&s| ds.indices(s).len()).collect();
    assert_eq!(sizes, [280, 60, 60]);
    for split in [Split::Val, Split::Test] {
        let mut per_class = [0usize; 4];
        for i in ds.indices(split) {
            per_class[ds.samples[i].label] += 1;
        }
        assert_eq!(per_class, [15; 4]);
    }
    for s in &ds.samples {
        assert_eq!(s.label == 0, s.mask.as_ref().unwrap().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn pgm_round_trip() {
    let mut r = rng(2);
    let dir = tempfile::tempdir().unwrap();
    for k in 0..10 {
        let (w, h) = (r.random_range(1..20), r.random_range(1..20));
        let img = GrayImage::new(w, h, (0..w * h).map(|_| r.random()).collect()).unwrap();
        let p = dir.path().join(format!("{k}.pgm"));
        img.write(&p).unwrap();
        assert_eq!(GrayImage::read(&p).unwrap(), img);
        assert_eq!(GrayImage::decode(&img.encode(), &p).unwrap(), img);
    }
}

#[test]
fn loading_is_idempotent_and_generation_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(a.path(), 40, 16, 9);
    generate(b.path(), 40, 16, 9);
    let first = load_dataset(a.path(), None).unwrap();
    let again = load_dataset(a.path(), None).unwrap();
    let other = load_dataset(b.path(), None).unwrap();
    assert_eq!(first.samples, again.samples);
    assert_eq!(first.samples, other.samples);
    let manifest = |d: &tempfile::TempDir| std::fs::read(d.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest(&a), manifest(&b));
}
