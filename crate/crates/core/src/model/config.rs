use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Output channels and output bandwidth of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stage {
    pub channels: usize,
    pub bandwidth: usize,
}

impl Stage {
    pub const fn new(channels: usize, bandwidth: usize) -> Self {
        Self { channels, bandwidth }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.channels, self.bandwidth)
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (c, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("stage `{s}` is not `channels:bandwidth`")))?;
        let parse =
            |v: &str| v.trim().parse::<usize>().map_err(|_| Error::InvalidConfig(format!("bad number in stage `{s}`")));
        Ok(Self::new(parse(c)?, parse(b)?))
    }
}

fn stages_to_string(v: &[Stage]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_stages(s: &str) -> Result<Vec<Stage>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

/// Architecture of the autoencoder.
///
/// The encoder is one S² convolution (`encoder[0]`) followed by SO(3)
/// convolutions, ReLU after each, integral pooling and an optional dense
/// layer. The decoder maps the latent vector to the spectrum of an SO(3)
/// signal (`decoder_start`), then applies SO(3) convolutions (ReLU after all
/// but the last) and integrates out γ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub input_bandwidth: usize,
    pub encoder: Vec<Stage>,
    pub latent_dim: usize,
    /// Dense layer from the pooled vector to the latent; when false the
    /// pooled vector is the latent and `latent_dim` must equal its length.
    pub encoder_dense: bool,
    pub decoder_start: Stage,
    pub decoder: Vec<Stage>,
    /// Grid ReLUs; disabling them gives the purely linear network.
    pub relu: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// Full-scale spherical-MNIST architecture (input bandwidth 30).
    pub fn full() -> Self {
        Self {
            input_channels: 1,
            input_bandwidth: 30,
            encoder: vec![Stage::new(20, 12), Stage::new(40, 6)],
            latent_dim: 120,
            encoder_dense: true,
            decoder_start: Stage::new(40, 6),
            decoder: vec![Stage::new(20, 12), Stage::new(1, 30)],
            relu: true,
        }
    }

    /// Reduced architecture for bandwidth-16 inputs.
    pub fn desk() -> Self {
        Self {
            input_channels: 1,
            input_bandwidth: 16,
            encoder: vec![Stage::new(12, 8), Stage::new(24, 4)],
            latent_dim: 120,
            encoder_dense: true,
            decoder_start: Stage::new(24, 4),
            decoder: vec![Stage::new(12, 8), Stage::new(1, 16)],
            relu: true,
        }
    }

    /// Tiny architecture for gradient checks.
    pub fn toy() -> Self {
        Self {
            input_channels: 1,
            input_bandwidth: 4,
            encoder: vec![Stage::new(3, 3), Stage::new(4, 2)],
            latent_dim: 5,
            encoder_dense: true,
            decoder_start: Stage::new(3, 2),
            decoder: vec![Stage::new(2, 3), Stage::new(1, 4)],
            relu: true,
        }
    }

    /// Named preset: `full`, `desk` or `toy`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}`"))),
        }
    }

    pub fn pooled_dim(&self) -> usize {
        self.encoder.last().map_or(0, |s| s.channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.input_channels == 0 || self.input_bandwidth == 0 {
            return bad("input channels and bandwidth must be positive".into());
        }
        if self.encoder.is_empty() {
            return bad("encoder needs at least the S² convolution".into());
        }
        if self.latent_dim == 0 {
            return bad("latent dimension must be at least 1".into());
        }
        if !self.encoder_dense && self.latent_dim != self.pooled_dim() {
            return bad(format!(
                "without the encoder dense layer the latent dimension must equal the pooled width {}",
                self.pooled_dim()
            ));
        }
        let all = self.encoder.iter().chain(std::iter::once(&self.decoder_start)).chain(&self.decoder);
        if all.clone().any(|s| s.channels == 0 || s.bandwidth == 0) {
            return bad("every stage needs positive channels and bandwidth".into());
        }
        let last = self.decoder.last().copied().unwrap_or(self.decoder_start);
        if last.channels != self.input_channels || last.bandwidth != self.input_bandwidth {
            return bad(format!(
                "decoder ends at {last} but the input is {}:{}",
                self.input_channels, self.input_bandwidth
            ));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "input_channels={}\ninput_bandwidth={}\nencoder={}\nlatent_dim={}\nencoder_dense={}\ndecoder_start={}\ndecoder={}\nrelu={}\n",
            self.input_channels,
            self.input_bandwidth,
            stages_to_string(&self.encoder),
            self.latent_dim,
            self.encoder_dense,
            self.decoder_start,
            stages_to_string(&self.decoder),
            self.relu
        )
    }

    /// Parses `key=value` lines. Keys absent from `text` keep the values of
    /// `base`; `#` starts a comment.
    pub fn from_kv(text: &str, base: &Self) -> Result<Self> {
        let map = parse_kv(text)?;
        let mut c = base.clone();
        for (k, v) in &map {
            let num = || v.parse::<usize>().map_err(|_| Error::InvalidConfig(format!("bad value for {k}: `{v}`")));
            let flag = || v.parse::<bool>().map_err(|_| Error::InvalidConfig(format!("bad value for {k}: `{v}`")));
            match k.as_str() {
                "input_channels" => c.input_channels = num()?,
                "input_bandwidth" => c.input_bandwidth = num()?,
                "encoder" => c.encoder = parse_stages(v)?,
                "latent_dim" => c.latent_dim = num()?,
                "encoder_dense" => c.encoder_dense = flag()?,
                "decoder_start" => c.decoder_start = v.parse()?,
                "decoder" => c.decoder = parse_stages(v)?,
                "relu" => c.relu = flag()?,
                _ => {}
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// `key=value` lines into a sorted map.
pub(crate) fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("line `{line}` is not key=value")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}
