//! The seven networks: content encoders for both domains, the artefact
//! encoder, one generator per domain and one patch discriminator per domain.
//!
//! Networks are described by a short list of [`Block`]s; the same description
//! drives parameter allocation, the forward pass and the architecture hash
//! stored in checkpoints.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nn::{ParamSet, Tape, Tensor, Var};
use crate::rng;
use crate::slice::{Domain, Modality, MultimodalSlice};

/// Experimental condition: which channels are seen and which loss is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    AdnCt,
    AdnMr,
    MultichannelAdn,
    Madn,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::AdnCt, Mode::AdnMr, Mode::MultichannelAdn, Mode::Madn];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::AdnCt => "adn_ct",
            Mode::AdnMr => "adn_mr",
            Mode::MultichannelAdn => "multichannel_adn",
            Mode::Madn => "madn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?} (expected adn_ct, adn_mr, multichannel_adn or madn)")))
    }

    pub fn modalities(self) -> &'static [Modality] {
        match self {
            Mode::AdnCt => &[Modality::Ct],
            Mode::AdnMr => &[Modality::Mr],
            _ => &[Modality::Ct, Modality::Mr],
        }
    }

    pub fn n_channels(self) -> usize {
        self.modalities().len()
    }

    /// Only MADN adds the cross-modal similarity term.
    pub fn uses_similarity(self) -> bool {
        self == Mode::Madn
    }

    /// MADN trains both cycles; the ADN baselines keep only the
    /// clean → corrupted → clean self-reconstruction.
    pub fn uses_full_cycle(self) -> bool {
        self == Mode::Madn
    }
}

impl core::fmt::Display for Mode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Network widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    /// Channels after the first encoder stage; content codes carry twice this.
    pub base_channels: usize,
    pub artefact_channels: usize,
    pub disc_channels: usize,
    pub res_blocks: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            artefact_channels: 16,
            disc_channels: 32,
            res_blocks: 2,
        }
    }
}

impl ArchConfig {
    pub fn content_channels(&self) -> usize {
        2 * self.base_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.artefact_channels == 0 || self.disc_channels == 0 {
            return Err(Error::InvalidConfig("network widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Net {
    EncoderClean,
    EncoderCorrupted,
    EncoderArtefact,
    GeneratorClean,
    GeneratorCorrupted,
    DiscriminatorClean,
    DiscriminatorCorrupted,
}

impl Net {
    pub const ALL: [Net; 7] = [
        Net::EncoderClean,
        Net::EncoderCorrupted,
        Net::EncoderArtefact,
        Net::GeneratorClean,
        Net::GeneratorCorrupted,
        Net::DiscriminatorClean,
        Net::DiscriminatorCorrupted,
    ];
    pub const ENCODERS_GENERATORS: [Net; 5] = [
        Net::EncoderClean,
        Net::EncoderCorrupted,
        Net::EncoderArtefact,
        Net::GeneratorClean,
        Net::GeneratorCorrupted,
    ];
    pub const DISCRIMINATORS: [Net; 2] = [Net::DiscriminatorClean, Net::DiscriminatorCorrupted];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Net::EncoderClean => "E_clean",
            Net::EncoderCorrupted => "E_corrupted",
            Net::EncoderArtefact => "E_artefact",
            Net::GeneratorClean => "G_clean",
            Net::GeneratorCorrupted => "G_corrupted",
            Net::DiscriminatorClean => "D_clean",
            Net::DiscriminatorCorrupted => "D_corrupted",
        }
    }

    pub fn is_discriminator(self) -> bool {
        matches!(self, Net::DiscriminatorClean | Net::DiscriminatorCorrupted)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
}

pub const LEAKY_SLOPE: f32 = 0.2;

/// Convolution (or transposed convolution) + optional instance norm + activation.
/// Normalised stages drop the convolution bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub transpose: bool,
    pub norm: bool,
    pub act: Act,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Stage(Stage),
    /// `x + IN(conv3(ReLU(IN(conv3(x)))))`.
    Residual(usize),
}

fn conv(cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize, norm: bool, act: Act) -> Block {
    Block::Stage(Stage {
        cin,
        cout,
        kernel,
        stride,
        pad,
        transpose: false,
        norm,
        act,
    })
}

fn up(cin: usize, cout: usize) -> Block {
    Block::Stage(Stage {
        cin,
        cout,
        kernel: 4,
        stride: 2,
        pad: 1,
        transpose: true,
        norm: true,
        act: Act::Relu,
    })
}

fn residual_pair(c: usize) -> [Stage; 2] {
    let s = Stage {
        cin: c,
        cout: c,
        kernel: 3,
        stride: 1,
        pad: 1,
        transpose: false,
        norm: true,
        act: Act::Relu,
    };
    [s, Stage { act: Act::Identity, ..s }]
}

/// Layer list of one network for `channels` image channels.
pub fn blocks(arch: &ArchConfig, net: Net, channels: usize) -> Vec<Block> {
    let b = arch.base_channels;
    let cc = arch.content_channels();
    let res = |c: usize| (0..arch.res_blocks).map(move |_| Block::Residual(c));
    let mut out = Vec::new();
    match net {
        Net::EncoderClean | Net::EncoderCorrupted | Net::EncoderArtefact => {
            let code = if net == Net::EncoderArtefact { arch.artefact_channels } else { cc };
            out.push(conv(channels, b, 4, 2, 1, true, Act::Relu));
            out.push(conv(b, code, 4, 2, 1, true, Act::Relu));
            out.extend(res(code));
        }
        Net::GeneratorClean | Net::GeneratorCorrupted => {
            if net == Net::GeneratorCorrupted {
                out.push(conv(cc + arch.artefact_channels, cc, 3, 1, 1, true, Act::Relu));
            }
            out.extend(res(cc));
            out.push(up(cc, b));
            out.push(up(b, b));
            out.push(conv(b, channels, 3, 1, 1, false, Act::Tanh));
        }
        Net::DiscriminatorClean | Net::DiscriminatorCorrupted => {
            let d = arch.disc_channels;
            out.push(conv(channels, d, 7, 2, 3, false, Act::LeakyRelu));
            out.push(conv(d, 2 * d, 7, 2, 3, true, Act::LeakyRelu));
            out.push(conv(2 * d, 4 * d, 7, 2, 3, true, Act::LeakyRelu));
            out.push(conv(4 * d, 1, 5, 1, 2, false, Act::Identity));
        }
    }
    out
}

/// Receptive field (pixels) of a discriminator built by [`blocks`].
pub fn receptive_field(blocks: &[Block]) -> usize {
    let mut rf = 1;
    let mut jump = 1;
    for b in blocks {
        if let Block::Stage(s) = b {
            rf += (s.kernel - 1) * jump;
            jump *= s.stride;
        }
    }
    rf
}

fn alloc_stage(set: &mut ParamSet, prefix: &str, s: &Stage, rng: &mut rand_chacha::ChaCha8Rng) {
    let k2 = s.kernel * s.kernel;
    let (shape, fan_in) = if s.transpose {
        ([s.cin, s.cout, s.kernel, s.kernel], (s.cin * k2 / (s.stride * s.stride)).max(1))
    } else {
        ([s.cout, s.cin, s.kernel, s.kernel], s.cin * k2)
    };
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (z * std) as f32
        })
        .collect();
    set.push(format!("{prefix}.weight"), Tensor::from_vec(shape, data));
    if s.norm {
        set.push(format!("{prefix}.gamma"), Tensor::from_vec([1, s.cout, 1, 1], vec![1.0; s.cout]));
        set.push(format!("{prefix}.beta"), Tensor::zeros([1, s.cout, 1, 1]));
    } else {
        set.push(format!("{prefix}.bias"), Tensor::zeros([1, s.cout, 1, 1]));
    }
}

fn build_params(blocks: &[Block], seed: u64, net: Net) -> ParamSet {
    let mut rng = rng::rng(seed, 0x4e45_5400 + net.index() as u64);
    let mut set = ParamSet::new();
    for (i, b) in blocks.iter().enumerate() {
        match b {
            Block::Stage(s) => alloc_stage(&mut set, &format!("{i}"), s, &mut rng),
            Block::Residual(c) => {
                for (j, s) in residual_pair(*c).iter().enumerate() {
                    alloc_stage(&mut set, &format!("{i}.{j}"), s, &mut rng);
                }
            }
        }
    }
    set
}

fn forward_stage(tape: &mut Tape<'_>, set: usize, cursor: &mut usize, s: &Stage, x: Var) -> Var {
    let mut next = || {
        *cursor += 1;
        *cursor - 1
    };
    let w = next();
    let w = tape.param(set, w);
    let bias = if s.norm { None } else { Some(next()) };
    let bias = bias.map(|i| tape.param(set, i));
    let mut y = if s.transpose {
        tape.conv_transpose2d(x, w, bias, s.stride, s.pad)
    } else {
        tape.conv2d(x, w, bias, s.stride, s.pad)
    };
    if s.norm {
        let (g, b) = (next(), next());
        let gamma = tape.param(set, g);
        let beta = tape.param(set, b);
        y = tape.instance_norm(y, gamma, beta);
    }
    match s.act {
        Act::Identity => y,
        Act::Relu => tape.relu(y),
        Act::LeakyRelu => tape.leaky_relu(y, LEAKY_SLOPE),
        Act::Tanh => tape.tanh(y),
    }
}

/// Records the forward pass of `blocks` (parameters from `set`) on the tape.
pub fn forward_blocks(tape: &mut Tape<'_>, set: usize, blocks: &[Block], x: Var) -> Var {
    let mut cursor = 0;
    let mut x = x;
    for b in blocks {
        x = match b {
            Block::Stage(s) => forward_stage(tape, set, &mut cursor, s, x),
            Block::Residual(c) => {
                let [s1, s2] = residual_pair(*c);
                let h = forward_stage(tape, set, &mut cursor, &s1, x);
                let h = forward_stage(tape, set, &mut cursor, &s2, h);
                tape.add(x, h)
            }
        };
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeKind {
    Content,
    Artefact,
}

/// Spatial latent code `[N, channels, H/4, W/4]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub kind: CodeKind,
    pub values: Tensor,
}

/// Parameters of all seven networks plus the mode they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    mode: Mode,
    arch: ArchConfig,
    sets: Vec<ParamSet>,
}

impl ModelBundle {
    /// He-normal weights, unit norm gains, zero biases; deterministic in `seed`.
    pub fn new(mode: Mode, arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let c = mode.n_channels();
        let sets = Net::ALL
            .iter()
            .map(|&net| build_params(&blocks(&arch, net, c), seed, net))
            .collect();
        Ok(Self { mode, arch, sets })
    }

    /// Rebuilds a bundle from stored parameter sets, checking every shape.
    pub fn from_params(mode: Mode, arch: ArchConfig, sets: Vec<ParamSet>) -> Result<Self> {
        let fresh = Self::new(mode, arch, 0)?;
        if sets.len() != fresh.sets.len() {
            return Err(Error::ShapeMismatch(format!("expected {} parameter sets, got {}", fresh.sets.len(), sets.len())));
        }
        for (net, (a, b)) in Net::ALL.iter().zip(fresh.sets.iter().zip(&sets)) {
            let same = a.len() == b.len() && a.iter().zip(b.iter()).all(|((na, ta), (nb, tb))| na == nb && ta.shape == tb.shape);
            if !same {
                return Err(Error::ShapeMismatch(format!("parameters of {} do not match the architecture", net.name())));
            }
        }
        Ok(Self { mode, arch, sets })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn n_channels(&self) -> usize {
        self.mode.n_channels()
    }

    pub fn params(&self, net: Net) -> &ParamSet {
        &self.sets[net.index()]
    }

    pub fn params_mut(&mut self, net: Net) -> &mut ParamSet {
        &mut self.sets[net.index()]
    }

    pub fn sets(&self) -> &[ParamSet] {
        &self.sets
    }

    pub fn blocks(&self, net: Net) -> Vec<Block> {
        blocks(&self.arch, net, self.n_channels())
    }

    pub fn n_values(&self) -> usize {
        self.sets.iter().map(ParamSet::n_values).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.sets.iter().all(ParamSet::all_finite)
    }

    /// First network holding a non-finite parameter, if any.
    pub fn first_non_finite(&self) -> Option<Net> {
        Net::ALL.into_iter().find(|n| !self.params(*n).all_finite())
    }

    pub fn fingerprint(&self, nets: &[Net]) -> u64 {
        nets.iter().fold(0u64, |h, n| rng::mix64(h ^ self.params(*n).fingerprint()))
    }

    /// Hash of mode, widths and every layer description.
    pub fn architecture_hash(&self) -> u64 {
        let mut desc = String::new();
        desc.push_str(self.mode.as_str());
        for net in Net::ALL {
            desc.push_str(&format!("|{}:{:?}", net.name(), self.blocks(net)));
        }
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in desc.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }

    /// A tape over all seven parameter sets; only `trainable` nets get gradients.
    pub fn tape(&self, trainable: &[Net]) -> Tape<'_> {
        let flags = Net::ALL.iter().map(|n| trainable.contains(n)).collect();
        Tape::new(self.sets.iter().collect(), flags)
    }

    /// Records `net` applied to `x`. For the corrupted-domain generator `x`
    /// must already be the channel concatenation of content and artefact codes.
    pub fn forward(&self, tape: &mut Tape<'_>, net: Net, x: Var) -> Var {
        forward_blocks(tape, net.index(), &self.blocks(net), x)
    }

    pub fn decode_corrupted_var(&self, tape: &mut Tape<'_>, c: Var, a: Var) -> Var {
        let ca = tape.concat(c, a);
        self.forward(tape, Net::GeneratorCorrupted, ca)
    }

    fn check_image(&self, x: &Tensor) -> Result<()> {
        if x.c() != self.n_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.n_channels(),
                got: x.c(),
            });
        }
        if x.h() % 4 != 0 || x.w() % 4 != 0 || x.h() == 0 || x.w() == 0 {
            return Err(Error::ShapeMismatch(format!("image side {}x{} must be a positive multiple of 4", x.h(), x.w())));
        }
        Ok(())
    }

    fn run(&self, net: Net, x: &Tensor) -> Tensor {
        let mut tape = self.tape(&[]);
        let v = tape.input(x.clone());
        let y = self.forward(&mut tape, net, v);
        tape.value(y).clone()
    }

    pub fn encode_clean(&self, y: &Tensor) -> Result<LatentCode> {
        self.check_image(y)?;
        Ok(LatentCode {
            kind: CodeKind::Content,
            values: self.run(Net::EncoderClean, y),
        })
    }

    pub fn encode_corrupted(&self, x_a: &Tensor) -> Result<LatentCode> {
        self.check_image(x_a)?;
        Ok(LatentCode {
            kind: CodeKind::Content,
            values: self.run(Net::EncoderCorrupted, x_a),
        })
    }

    pub fn encode_artefact(&self, x_a: &Tensor) -> Result<LatentCode> {
        self.check_image(x_a)?;
        Ok(LatentCode {
            kind: CodeKind::Artefact,
            values: self.run(Net::EncoderArtefact, x_a),
        })
    }

    fn check_code(&self, code: &LatentCode, kind: CodeKind) -> Result<()> {
        let want = match kind {
            CodeKind::Content => self.arch.content_channels(),
            CodeKind::Artefact => self.arch.artefact_channels,
        };
        if code.kind != kind || code.values.c() != want {
            return Err(Error::ShapeMismatch(format!(
                "expected a {kind:?} code with {want} channels, got {:?} with {}",
                code.kind,
                code.values.c()
            )));
        }
        Ok(())
    }

    pub fn decode_clean(&self, c: &LatentCode) -> Result<Tensor> {
        self.check_code(c, CodeKind::Content)?;
        Ok(self.run(Net::GeneratorClean, &c.values))
    }

    pub fn decode_corrupted(&self, c: &LatentCode, a: &LatentCode) -> Result<Tensor> {
        self.check_code(c, CodeKind::Content)?;
        self.check_code(a, CodeKind::Artefact)?;
        if c.values.shape[0] != a.values.shape[0] || c.values.shape[2..] != a.values.shape[2..] {
            return Err(Error::ShapeMismatch("content and artefact codes differ in batch or spatial size".into()));
        }
        let mut tape = self.tape(&[]);
        let cv = tape.input(c.values.clone());
        let av = tape.input(a.values.clone());
        let y = self.decode_corrupted_var(&mut tape, cv, av);
        Ok(tape.value(y).clone())
    }

    /// Patch logits `[N, 1, ⌈H/8⌉, ⌈W/8⌉]` of the discriminator of `domain`.
    pub fn discriminate(&self, domain: Domain, img: &Tensor) -> Result<Tensor> {
        if img.c() != self.n_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.n_channels(),
                got: img.c(),
            });
        }
        let net = match domain {
            Domain::Clean => Net::DiscriminatorClean,
            Domain::Corrupted => Net::DiscriminatorCorrupted,
        };
        Ok(self.run(net, img))
    }

    /// Stacks the mode's channels of each slice into an `[N, C, H, W]` batch.
    pub fn to_tensor(&self, slices: &[&MultimodalSlice]) -> Result<Tensor> {
        slices_to_tensor(slices, self.mode.modalities())
    }

    pub fn to_slices(&self, t: &Tensor, domain: Domain) -> Result<Vec<MultimodalSlice>> {
        tensor_to_slices(t, self.mode.modalities(), domain)
    }
}

pub fn slices_to_tensor(slices: &[&MultimodalSlice], modalities: &[Modality]) -> Result<Tensor> {
    let first = slices.first().ok_or_else(|| Error::Empty("no slices".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(slices.len() * modalities.len() * w * h);
    for s in slices {
        if (s.width(), s.height()) != (w, h) {
            return Err(Error::ShapeMismatch("slices in a batch must share their size".into()));
        }
        for m in modalities {
            let g = s.channel(*m).ok_or_else(|| Error::ChannelMismatch {
                expected: modalities.len(),
                got: s.n_channels(),
            })?;
            data.extend(g.iter().map(|v| *v as f32));
        }
    }
    Ok(Tensor::from_vec([slices.len(), modalities.len(), h, w], data))
}

pub fn tensor_to_slices(t: &Tensor, modalities: &[Modality], domain: Domain) -> Result<Vec<MultimodalSlice>> {
    let [n, c, h, w] = t.shape;
    if c != modalities.len() {
        return Err(Error::ChannelMismatch {
            expected: modalities.len(),
            got: c,
        });
    }
    (0..n)
        .map(|i| {
            let channels = (0..c)
                .map(|k| {
                    let off = (i * c + k) * h * w;
                    Grid::from_vec(w, h, t.data[off..off + h * w].iter().map(|v| *v as f64).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            MultimodalSlice::from_channels(domain, modalities.to_vec(), channels)
        })
        .collect()
}
