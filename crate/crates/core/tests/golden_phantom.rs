//! Reference draw recorded from the first verified generator run.

use madn_core::phantom::{make_clean_sample, make_corrupted_sample, PhantomSpec};
use madn_core::Modality;

fn spec() -> PhantomSpec {
    PhantomSpec {
        image_size: 64,
        n_tissues: 4,
        seed: 7,
        ..PhantomSpec::default()
    }
}

const HISTOGRAM: [usize; 4] = [2253, 1278, 483, 82];

/// (roi, pixels, CT mean, MR mean)
const ROI_MEANS: [(&str, usize, f64, f64); 2] = [
    ("implant_side", 137, 9.938_875_703_207_868e-2, -2.001_188_570_807_664e-1),
    ("contralateral", 143, 9.813_051_655_457_371e-2, -1.993_244_496_952_015e-1),
];

#[test]
fn reference_label_histogram_and_roi_means() {
    let s = make_clean_sample(&spec(), 0).unwrap();
    let mut h = [0usize; 4];
    s.labels.iter().for_each(|l| h[*l as usize] += 1);
    assert_eq!(h, HISTOGRAM);
    for (name, n, ct, mr) in ROI_MEANS {
        let roi = s.roi(name).unwrap();
        for (m, want) in [(Modality::Ct, ct), (Modality::Mr, mr)] {
            let v = s.clean.channel(m).unwrap().masked_values(roi).unwrap();
            assert_eq!(v.len(), n, "{name}");
            let mean = v.iter().sum::<f64>() / n as f64;
            assert!((mean - want).abs() < 1e-9, "{name} {m:?}: {mean} vs {want}");
        }
    }
}

#[test]
fn draws_are_pure_functions_of_spec_and_seed() {
    assert_eq!(make_clean_sample(&spec(), 0).unwrap(), make_clean_sample(&spec(), 0).unwrap());
    assert_eq!(make_corrupted_sample(&spec(), 3).unwrap(), make_corrupted_sample(&spec(), 3).unwrap());
    let other = PhantomSpec { seed: 8, ..spec() };
    assert_ne!(make_clean_sample(&spec(), 0).unwrap().labels, make_clean_sample(&other, 0).unwrap().labels);
    assert_ne!(make_clean_sample(&spec(), 0).unwrap().labels, make_clean_sample(&spec(), 1).unwrap().labels);
}
