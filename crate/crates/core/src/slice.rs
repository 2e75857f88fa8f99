use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Image population a slice belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Clean,
    Corrupted,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Clean => "clean",
            Domain::Corrupted => "corrupted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clean" => Some(Domain::Clean),
            "corrupted" => Some(Domain::Corrupted),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Ct,
    Mr,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ct => "CT",
            Modality::Mr => "MR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CT" => Some(Modality::Ct),
            "MR" => Some(Modality::Mr),
            _ => None,
        }
    }
}

/// Spatially aligned channels of one 2D slice. The full multimodal slice is
/// `[CT, MR]`; single-modality models work on one-channel views of it.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalSlice {
    pub domain: Domain,
    modalities: Vec<Modality>,
    channels: Vec<Grid<f64>>,
}

impl MultimodalSlice {
    pub fn new(domain: Domain, ct: Grid<f64>, mr: Grid<f64>) -> Result<Self> {
        ct.check_same_shape(&mr, "CT/MR channels")?;
        Ok(Self {
            domain,
            modalities: alloc::vec![Modality::Ct, Modality::Mr],
            channels: alloc::vec![ct, mr],
        })
    }

    pub fn from_channels(
        domain: Domain,
        modalities: Vec<Modality>,
        channels: Vec<Grid<f64>>,
    ) -> Result<Self> {
        if modalities.len() != channels.len() || channels.is_empty() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} modalities for {} channels",
                modalities.len(),
                channels.len()
            )));
        }
        for c in &channels[1..] {
            channels[0].check_same_shape(c, "slice channels")?;
        }
        Ok(Self {
            domain,
            modalities,
            channels,
        })
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn channels(&self) -> &[Grid<f64>] {
        &self.channels
    }

    pub fn channel(&self, modality: Modality) -> Option<&Grid<f64>> {
        self.modalities
            .iter()
            .position(|m| *m == modality)
            .map(|i| &self.channels[i])
    }

    pub fn ct(&self) -> Option<&Grid<f64>> {
        self.channel(Modality::Ct)
    }

    pub fn mr(&self) -> Option<&Grid<f64>> {
        self.channel(Modality::Mr)
    }

    /// View restricted to the requested modalities, in the requested order.
    pub fn select(&self, modalities: &[Modality]) -> Result<Self> {
        let mut channels = Vec::with_capacity(modalities.len());
        for m in modalities {
            let c = self.channel(*m).ok_or(Error::ChannelMismatch {
                expected: modalities.len(),
                got: self.n_channels(),
            })?;
            channels.push(c.clone());
        }
        Self::from_channels(self.domain, modalities.to_vec(), channels)
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }
}
