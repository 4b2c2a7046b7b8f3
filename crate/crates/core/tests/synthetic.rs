use mexp::dataset::{self, DatasetIndex, SynthSpec, VideoClip};

/// LOSO accuracy of 1-nearest-neighbour on mean absolute frame-difference
/// images.
fn nn_accuracy(clips: &[VideoClip]) -> f64 {
    let feature = |c: &VideoClip| -> Vec<f64> {
        let f = c.frames();
        let mut acc = vec![0.0; f[0].as_slice().len()];
        for t in 1..f.len() {
            for (a, (x, y)) in acc.iter_mut().zip(f[t].as_slice().iter().zip(f[t - 1].as_slice())) {
                *a += (x - y).abs() / (f.len() - 1) as f64;
            }
        }
        acc
    };
    let feats: Vec<Vec<f64>> = clips.iter().map(feature).collect();
    let dist = |i: usize, j: usize| feats[i].iter().zip(&feats[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let correct = (0..clips.len())
        .filter(|&i| {
            let nn = (0..clips.len())
                .filter(|&j| clips[j].subject_id != clips[i].subject_id)
                .min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)))
                .unwrap();
            clips[nn].label == clips[i].label
        })
        .count();
    correct as f64 / clips.len() as f64
}

#[test]
fn three_subject_benchmark_is_separable() {
    let spec = SynthSpec {
        n_subjects: 3,
        ..SynthSpec::default()
    };
    let (index, clips) = dataset::synthesize_dataset(&spec).unwrap();
    assert_eq!(clips.len(), 36);
    assert_eq!(index.n_classes(), 3);
    assert!(nn_accuracy(&clips) >= 0.8);
}

#[test]
fn same_seed_same_dataset() {
    let spec = SynthSpec {
        n_subjects: 2,
        width: 24,
        height: 24,
        ..SynthSpec::default()
    };
    let a = dataset::synthesize_dataset(&spec).unwrap();
    let b = dataset::synthesize_dataset(&spec).unwrap();
    assert_eq!(a.1, b.1);
    let other = dataset::synthesize_dataset(&SynthSpec { seed: 8, ..spec }).unwrap();
    assert_ne!(a.1, other.1);
}

#[test]
fn still_clips_without_noise_or_motion() {
    let spec = SynthSpec {
        n_subjects: 2,
        width: 24,
        height: 24,
        noise_amplitude: 0.0,
        motion_amplitude: 0.0,
        ..SynthSpec::default()
    };
    let (_, clips) = dataset::synthesize_dataset(&spec).unwrap();
    for c in &clips {
        assert!(c.frames().iter().all(|f| f == &c.frames()[0]));
    }
}

#[test]
fn written_dataset_loads_back_unchanged() {
    let spec = SynthSpec {
        n_subjects: 2,
        n_classes: 2,
        clips_per_subject_per_class: 2,
        width: 20,
        height: 16,
        ..SynthSpec::default()
    };
    let (index, clips) = dataset::synthesize_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    dataset::write_dataset(dir.path(), &index, &clips).unwrap();
    let loaded = DatasetIndex::load(&dir.path().join("index.csv")).unwrap();
    let back = loaded.load_clips().unwrap();
    assert_eq!(back.len(), clips.len());
    for (a, b) in clips.iter().zip(&back) {
        assert_eq!(a.clip_id, b.clip_id);
        assert_eq!(a.subject_id, b.subject_id);
        assert_eq!(a.label, b.label);
        assert_eq!(a.frames(), b.frames());
    }
    let splits = loaded.loso_splits().unwrap();
    assert_eq!(splits.len(), 2);
    for s in &splits {
        assert_eq!(s.train.len() + s.test.len(), clips.len());
        assert!(s.test.iter().all(|&i| back[i].subject_id == s.subject));
        assert!(s.train.iter().all(|&i| back[i].subject_id != s.subject));
    }
}
