//! Token vocabulary and the trainable sentence encoders.
//!
//! Both encoder kinds end in a linear projection to the shared hidden
//! dimension, so downstream heads never depend on the encoder choice.

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::nn::{affine, dropout, lstm_step, xavier};
use crate::tensor::ops;
use crate::tensor::optim::{ParamStore, Parameter};
use crate::tensor::Tensor;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Frequency-sorted token vocabulary with `<pad>` (0) and `<unk>` (1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: std::cell::OnceCell<BTreeMap<String, usize>>,
}

impl Vocab {
    /// Build from a tokenized corpus, keeping tokens seen at least
    /// `min_count` times. Ties sort lexicographically for determinism.
    pub fn build<'a, I>(corpus: I, min_count: u64) -> Result<Vocab>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        let mut any = false;
        for sent in corpus {
            for tok in sent {
                any = true;
                *freq.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::validation("empty corpus for vocabulary"));
        }
        let mut entries: Vec<(&str, u64)> =
            freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens = vec![PAD.to_string(), UNK.to_string()];
        let mut counts = vec![0, 0];
        for (t, c) in entries {
            tokens.push(t.to_string());
            counts.push(c);
        }
        Ok(Vocab {
            tokens,
            counts,
            index: Default::default(),
        })
    }

    /// Closed inventory from a fixed label list (POS tags, deprels).
    pub fn closed(labels: impl IntoIterator<Item = String>) -> Vocab {
        let mut set: Vec<String> = labels.into_iter().collect();
        set.sort();
        set.dedup();
        let counts = vec![0; set.len()];
        Vocab {
            tokens: set,
            counts,
            index: Default::default(),
        }
    }

    fn index(&self) -> &BTreeMap<String, usize> {
        self.index.get_or_init(|| {
            self.tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i))
                .collect()
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a token, falling back to `<unk>` for open vocabularies.
    pub fn id(&self, token: &str) -> usize {
        match self.index().get(token) {
            Some(&i) => i,
            None => self.index().get(UNK).copied().unwrap_or(0),
        }
    }

    /// Id of a closed-inventory label; unknown labels are an error.
    pub fn strict_id(&self, label: &str) -> Result<usize> {
        self.index()
            .get(label)
            .copied()
            .ok_or_else(|| Error::validation(format!("unknown label {:?}", label)))
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line with its count.
    pub fn to_text(&self) -> String {
        self.tokens
            .iter()
            .zip(&self.counts)
            .map(|(t, c)| format!("{}\t{}\n", t, c))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Vocab> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let tok = parts.next().unwrap();
            let count: u64 = parts
                .next()
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: "missing count column".into(),
                })?
                .parse()
                .map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: "bad count".into(),
                })?;
            tokens.push(tok.to_string());
            counts.push(count);
        }
        Ok(Vocab {
            tokens,
            counts,
            index: Default::default(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Bilstm,
    Transformer,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderKind::Bilstm => write!(f, "bilstm"),
            EncoderKind::Transformer => write!(f, "transformer"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub embed_dim: usize,
    /// Shared output dimension d_h.
    pub hidden_dim: usize,
    pub layers: usize,
    pub max_len: usize,
    pub dropout: f64,
    #[serde(default = "default_heads")]
    pub attn_heads: usize,
}

fn default_heads() -> usize {
    4
}

impl Default for EncoderConfig {
    fn default() -> EncoderConfig {
        EncoderConfig {
            kind: EncoderKind::Bilstm,
            embed_dim: 64,
            hidden_dim: 128,
            layers: 1,
            max_len: 512,
            dropout: 0.3,
            attn_heads: 4,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("encoder dims must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.kind == EncoderKind::Transformer
            && (self.attn_heads == 0 || !self.embed_dim.is_multiple_of(self.attn_heads)) {
                return Err(Error::Config(format!(
                    "embed_dim {} not divisible by attn_heads {}",
                    self.embed_dim, self.attn_heads
                )));
            }
        Ok(())
    }
}

struct LstmDirection {
    w_ih: Parameter,
    w_hh: Parameter,
    b: Parameter,
}

struct TransformerLayer {
    w_q: Parameter,
    w_k: Parameter,
    w_v: Parameter,
    w_o: Parameter,
    b_o: Parameter,
    ln1_g: Parameter,
    ln1_b: Parameter,
    ff1_w: Parameter,
    ff1_b: Parameter,
    ff2_w: Parameter,
    ff2_b: Parameter,
    ln2_g: Parameter,
    ln2_b: Parameter,
}

enum Layers {
    Bilstm(Vec<(LstmDirection, LstmDirection)>),
    Transformer(Vec<TransformerLayer>),
}

/// Encoder parameters bound to a [`ParamStore`].
pub struct Encoder {
    pub cfg: EncoderConfig,
    embed: Parameter,
    layers: Layers,
    proj_w: Parameter,
    proj_b: Parameter,
}

impl Encoder {
    pub fn new(
        cfg: EncoderConfig,
        vocab_size: usize,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Encoder> {
        cfg.validate()?;
        let de = cfg.embed_dim;
        let dh = cfg.hidden_dim;
        let embed = store.register(
            "encoder.embed",
            vec![vocab_size, de],
            xavier(rng, vocab_size, de, vocab_size * de),
        );
        let layers = match cfg.kind {
            EncoderKind::Bilstm => {
                let mut out = Vec::new();
                // each direction produces de/2-dim states so the
                // concatenated layer output stays de wide
                let dl = de / 2;
                for l in 0..cfg.layers {
                    let mk =
                        |store: &mut ParamStore, rng: &mut ChaCha8Rng, tag: &str| LstmDirection {
                            w_ih: store.register(
                                &format!("encoder.lstm{}.{}.w_ih", l, tag),
                                vec![4 * dl, de],
                                xavier(rng, de, 4 * dl, 4 * dl * de),
                            ),
                            w_hh: store.register(
                                &format!("encoder.lstm{}.{}.w_hh", l, tag),
                                vec![4 * dl, dl],
                                xavier(rng, dl, 4 * dl, 4 * dl * dl),
                            ),
                            b: store.register(
                                &format!("encoder.lstm{}.{}.b", l, tag),
                                vec![4 * dl],
                                vec![0.0; 4 * dl],
                            ),
                        };
                    let fwd = mk(store, rng, "fwd");
                    let bwd = mk(store, rng, "bwd");
                    out.push((fwd, bwd));
                }
                Layers::Bilstm(out)
            }
            EncoderKind::Transformer => {
                let mut out = Vec::new();
                let ff = 4 * de;
                for l in 0..cfg.layers {
                    let p = |store: &mut ParamStore,
                             rng: &mut ChaCha8Rng,
                             name: &str,
                             rows: usize,
                             cols: usize| {
                        store.register(
                            &format!("encoder.tfmr{}.{}", l, name),
                            vec![rows, cols],
                            xavier(rng, rows, cols, rows * cols),
                        )
                    };
                    let bias = |store: &mut ParamStore, name: &str, n: usize| {
                        store.register(
                            &format!("encoder.tfmr{}.{}", l, name),
                            vec![n],
                            vec![0.0; n],
                        )
                    };
                    let ones = |store: &mut ParamStore, name: &str, n: usize| {
                        store.register(
                            &format!("encoder.tfmr{}.{}", l, name),
                            vec![n],
                            vec![1.0; n],
                        )
                    };
                    out.push(TransformerLayer {
                        w_q: p(store, rng, "w_q", de, de),
                        w_k: p(store, rng, "w_k", de, de),
                        w_v: p(store, rng, "w_v", de, de),
                        w_o: p(store, rng, "w_o", de, de),
                        b_o: bias(store, "b_o", de),
                        ln1_g: ones(store, "ln1_g", de),
                        ln1_b: bias(store, "ln1_b", de),
                        ff1_w: p(store, rng, "ff1_w", de, ff),
                        ff1_b: bias(store, "ff1_b", ff),
                        ff2_w: p(store, rng, "ff2_w", ff, de),
                        ff2_b: bias(store, "ff2_b", de),
                        ln2_g: ones(store, "ln2_g", de),
                        ln2_b: bias(store, "ln2_b", de),
                    });
                }
                Layers::Transformer(out)
            }
        };
        let proj_w = store.register("encoder.proj_w", vec![de, dh], xavier(rng, de, dh, de * dh));
        let proj_b = store.register("encoder.proj_b", vec![dh], vec![0.0; dh]);
        Ok(Encoder {
            cfg,
            embed,
            layers,
            proj_w,
            proj_b,
        })
    }

    /// Encode token ids into a `K x d_h` matrix.
    pub fn encode(&self, ids: &[usize], train: bool, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        if ids.is_empty() {
            return Err(Error::validation("cannot encode an empty sentence"));
        }
        if ids.len() > self.cfg.max_len {
            return Err(Error::validation(format!(
                "sentence length {} exceeds configured max {}",
                ids.len(),
                self.cfg.max_len
            )));
        }
        let k = ids.len();
        let de = self.cfg.embed_dim;
        let mut h = ops::embedding_lookup(&self.embed.tensor(), ids)?;
        match &self.layers {
            Layers::Bilstm(layers) => {
                for (fwd, bwd) in layers {
                    let dl = de / 2;
                    let run = |dir: &LstmDirection, order: Vec<usize>| -> Result<Vec<Tensor>> {
                        let mut states = vec![Tensor::zeros(vec![dl]); k];
                        let mut hprev = Tensor::zeros(vec![dl]);
                        let mut cprev = Tensor::zeros(vec![dl]);
                        for &i in &order {
                            let x = ops::row(&h, i)?;
                            let (hn, cn) = lstm_step(
                                &x,
                                &hprev,
                                &cprev,
                                &dir.w_ih.tensor(),
                                &dir.w_hh.tensor(),
                                &dir.b.tensor(),
                            )?;
                            states[i] = hn.clone();
                            hprev = hn;
                            cprev = cn;
                        }
                        Ok(states)
                    };
                    let f = run(fwd, (0..k).collect())?;
                    let b = run(bwd, (0..k).rev().collect())?;
                    let rows: Vec<Tensor> = f
                        .into_iter()
                        .zip(b)
                        .map(|(x, y)| ops::concat_vec(&[x, y]))
                        .collect::<Result<_>>()?;
                    h = ops::stack_rows(&rows)?;
                }
            }
            Layers::Transformer(layers) => {
                h = ops::add(&h, &Tensor::matrix(k, de, sinusoidal(k, de)))?;
                let heads = self.cfg.attn_heads;
                let dk = de / heads;
                let scale = 1.0 / (dk as f64).sqrt();
                for layer in layers {
                    let q = ops::matmul(&h, &layer.w_q.tensor())?;
                    let key = ops::matmul(&h, &layer.w_k.tensor())?;
                    let v = ops::matmul(&h, &layer.w_v.tensor())?;
                    let mut head_outs = Vec::with_capacity(heads);
                    for hd in 0..heads {
                        let sel: Vec<usize> = (hd * dk..(hd + 1) * dk).collect();
                        let qh = select_cols(&q, &sel)?;
                        let kh = select_cols(&key, &sel)?;
                        let vh = select_cols(&v, &sel)?;
                        let scores = ops::scale(&ops::matmul(&qh, &ops::transpose(&kh)?)?, scale);
                        let attn = ops::softmax_rows(&scores)?;
                        head_outs.push(ops::matmul(&attn, &vh)?);
                    }
                    let concat = ops::concat_cols(&head_outs)?;
                    let attn_out = affine(&concat, &layer.w_o.tensor(), &layer.b_o.tensor())?;
                    let attn_out = dropout(&attn_out, 1.0 - self.cfg.dropout, rng, train)?;
                    h = ops::layer_norm(
                        &ops::add(&h, &attn_out)?,
                        &layer.ln1_g.tensor(),
                        &layer.ln1_b.tensor(),
                    )?;
                    let ff = affine(&h, &layer.ff1_w.tensor(), &layer.ff1_b.tensor())?;
                    let ff = ops::relu(&ff);
                    let ff = affine(&ff, &layer.ff2_w.tensor(), &layer.ff2_b.tensor())?;
                    let ff = dropout(&ff, 1.0 - self.cfg.dropout, rng, train)?;
                    h = ops::layer_norm(
                        &ops::add(&h, &ff)?,
                        &layer.ln2_g.tensor(),
                        &layer.ln2_b.tensor(),
                    )?;
                }
            }
        }
        let projected = affine(&h, &self.proj_w.tensor(), &self.proj_b.tensor())?;
        dropout(&projected, 1.0 - self.cfg.dropout, rng, train)
    }
}

fn select_cols(t: &Tensor, cols: &[usize]) -> Result<Tensor> {
    // column selection via transpose + row selection
    let tt = ops::transpose(t)?;
    let sel = ops::select_rows(&tt, cols)?;
    ops::transpose(&sel)
}

fn sinusoidal(k: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * d];
    for p in 0..k {
        for i in 0..d {
            let angle = p as f64 / 10000f64.powf(2.0 * (i / 2) as f64 / d as f64);
            out[p * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}
