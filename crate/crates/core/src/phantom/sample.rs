use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::grid::{Grid, Mask};
use crate::phantom::anatomy::{make_anatomy, place_implant, Implant};
use crate::phantom::corrupt::{corrupt_ct, corrupt_mr, void_mask};
use crate::phantom::spec::PhantomSpec;
use crate::slice::{Domain, MultimodalSlice};

/// One synthetic draw. Pure-clean samples carry no corrupted slice and an
/// empty metal mask; corrupted samples hold the metal-free ground truth in
/// `clean` and its corrupted acquisition in `corrupted`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSample {
    pub sample_seed: u64,
    pub clean: MultimodalSlice,
    pub corrupted: Option<MultimodalSlice>,
    pub metal_mask: Mask,
    pub void_mask: Mask,
    pub labels: Grid<u8>,
    pub roi_masks: Vec<(String, Mask)>,
    pub implant: Option<Implant>,
}

impl PhantomSample {
    pub fn roi(&self, name: &str) -> Option<&Mask> {
        self.roi_masks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

pub fn make_clean_sample(spec: &PhantomSpec, sample_seed: u64) -> Result<PhantomSample> {
    let a = make_anatomy(spec, sample_seed)?;
    let n = spec.image_size;
    Ok(PhantomSample {
        sample_seed,
        clean: a.slice,
        corrupted: None,
        metal_mask: Mask::filled(n, n, false),
        void_mask: Mask::filled(n, n, false),
        labels: a.labels,
        roi_masks: a.roi_masks,
        implant: None,
    })
}

/// Anatomy plus implant, with both modalities corrupted. ROI masks exclude the
/// implant and a one-pixel rim around it.
pub fn make_corrupted_sample(spec: &PhantomSpec, sample_seed: u64) -> Result<PhantomSample> {
    let a = make_anatomy(spec, sample_seed)?;
    let n = spec.image_size;
    let implant = place_implant(spec, sample_seed, &a.layout);
    let metal_mask = implant.mask(n);
    let clean_ct = a.slice.ct().expect("anatomy has CT");
    let clean_mr = a.slice.mr().expect("anatomy has MR");
    let ct = corrupt_ct(clean_ct, &metal_mask, spec)?;
    let mr = corrupt_mr(clean_mr, &metal_mask, spec)?;
    let void_mask = void_mask(&metal_mask, spec)?;
    let rim = metal_mask.dilate(1);
    let roi_masks = a
        .roi_masks
        .into_iter()
        .map(|(name, m)| m.and_not(&rim).map(|m| (name, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhantomSample {
        sample_seed,
        clean: a.slice,
        corrupted: Some(MultimodalSlice::new(Domain::Corrupted, ct, mr)?),
        metal_mask,
        void_mask,
        labels: a.labels,
        roi_masks,
        implant: Some(implant),
    })
}
