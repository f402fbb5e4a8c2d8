//! The detection network: a GRU encoder over event-embedding sequences, an
//! additive attention pool, and two small heads sharing the encoder. The
//! classifier head scores anomaly probability; the domain head drives the
//! adversarial alignment between systems.
//!
//! Gradients are hand-written reverse mode over the exact forward recurrence.
//! Everything is generic over [`scalar::Scalar`] so the same code yields
//! plain f64 gradients and exact Hessian-vector products via dual numbers.

pub mod checkpoint;
pub mod scalar;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scalar::{Dual, Scalar};

/// Predicted probabilities are clamped to [FLOOR, 1 - FLOOR] before any log;
/// a clamped output also gates its gradient to zero.
pub const PROB_FLOOR: f64 = 1e-7;

/// One session as the network sees it: a sequence of event embeddings.
pub type Seq = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub head_hidden_dim: usize,
    pub init_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 300,
            hidden_dim: 128,
            attention_dim: 64,
            head_hidden_dim: 64,
            init_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Seg {
    off: usize,
    len: usize,
}

impl Seg {
    fn of<'a, S>(&self, v: &'a [S]) -> &'a [S] {
        &v[self.off..self.off + self.len]
    }
    fn of_mut<'a, S>(&self, v: &'a mut [S]) -> &'a mut [S] {
        &mut v[self.off..self.off + self.len]
    }
}

/// Flat layout of the shared encoder parameters, frozen order:
/// W_z U_z b_z | W_r U_r b_r | W_c U_c b_c | W_a v_a. Matrices row-major.
#[derive(Debug, Clone, Copy)]
struct EncLayout {
    wz: Seg,
    uz: Seg,
    bz: Seg,
    wr: Seg,
    ur: Seg,
    br: Seg,
    wc: Seg,
    uc: Seg,
    bc: Seg,
    wa: Seg,
    va: Seg,
    len: usize,
}

impl EncLayout {
    fn new(cfg: &NetworkConfig) -> EncLayout {
        let (d, h, a) = (cfg.input_dim, cfg.hidden_dim, cfg.attention_dim);
        let mut off = 0usize;
        let mut seg = |len: usize| {
            let s = Seg { off, len };
            off += len;
            s
        };
        EncLayout {
            wz: seg(h * d),
            uz: seg(h * h),
            bz: seg(h),
            wr: seg(h * d),
            ur: seg(h * h),
            br: seg(h),
            wc: seg(h * d),
            uc: seg(h * h),
            bc: seg(h),
            wa: seg(a * h),
            va: seg(a),
            len: off,
        }
    }
}

/// Flat layout of one head: W_1 b_1 | w_2 b_2.
#[derive(Debug, Clone, Copy)]
struct HeadLayout {
    w1: Seg,
    b1: Seg,
    w2: Seg,
    b2: Seg,
    len: usize,
}

impl HeadLayout {
    fn new(cfg: &NetworkConfig) -> HeadLayout {
        let (h, hh) = (cfg.hidden_dim, cfg.head_hidden_dim);
        let mut off = 0usize;
        let mut seg = |len: usize| {
            let s = Seg { off, len };
            off += len;
            s
        };
        HeadLayout { w1: seg(hh * h), b1: seg(hh), w2: seg(hh), b2: seg(1), len: off }
    }
}

/// All trainable parameters, split into the three groups the training loop
/// updates independently: shared encoder, classifier head, domain head.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub theta_e: Vec<f64>,
    pub theta_omega: Vec<f64>,
    pub theta_d: Vec<f64>,
}

impl NetworkParams {
    pub fn encoder_len(cfg: &NetworkConfig) -> usize {
        EncLayout::new(cfg).len
    }

    pub fn head_len(cfg: &NetworkConfig) -> usize {
        HeadLayout::new(cfg).len
    }

    /// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases, drawn
    /// in layout order from one seeded stream. Identical seeds give identical
    /// parameters on every platform.
    pub fn init(config: NetworkConfig) -> NetworkParams {
        let (d, h, a, hh) =
            (config.input_dim, config.hidden_dim, config.attention_dim, config.head_hidden_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut draw = |count: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..count).map(|_| (unit_f64(&mut rng) * 2.0 - 1.0) * bound).collect()
        };
        let mut theta_e = Vec::with_capacity(Self::encoder_len(&config));
        for _gate in 0..3 {
            theta_e.extend(draw(h * d, d));
            theta_e.extend(draw(h * h, h));
            theta_e.extend(std::iter::repeat(0.0).take(h));
        }
        theta_e.extend(draw(a * h, h));
        theta_e.extend(draw(a, a));
        let mut heads = [Vec::new(), Vec::new()];
        for head in &mut heads {
            head.reserve(Self::head_len(&config));
            head.extend(draw(hh * h, h));
            head.extend(std::iter::repeat(0.0).take(hh));
            head.extend(draw(hh, hh));
            head.push(0.0);
        }
        let [theta_omega, theta_d] = heads;
        NetworkParams { config, theta_e, theta_omega, theta_d }
    }

    /// Attention-pooled encoder output for one sequence.
    pub fn feature_extract(&self, seq: &[Vec<f64>]) -> Vec<f64> {
        seq_forward::<f64>(&self.config, &self.theta_e, seq).feat
    }

    /// Anomaly probability in [PROB_FLOOR, 1 - PROB_FLOOR].
    pub fn classify_anomaly(&self, seq: &[Vec<f64>]) -> f64 {
        let feat = self.feature_extract(seq);
        head_forward::<f64>(&self.config, &self.theta_omega, &feat).prob
    }

    /// Probability that the sequence came from the source system.
    pub fn classify_domain(&self, seq: &[Vec<f64>]) -> f64 {
        let feat = self.feature_extract(seq);
        head_forward::<f64>(&self.config, &self.theta_d, &feat).prob
    }

    pub fn loss_and_grad(&self, batch: &Batch<'_>, kind: LossKind) -> (f64, Gradients) {
        eval_batch::<f64>(&self.config, &self.theta_e, &self.theta_omega, &self.theta_d, batch, kind)
    }

    pub fn loss(&self, batch: &Batch<'_>, kind: LossKind) -> f64 {
        self.loss_and_grad(batch, kind).0
    }
}

/// 53 uniform bits from the top of one u64 draw; [0, 1).
fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rand::RngCore::next_u64(rng) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Which objective a batch evaluation computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Mean binary cross entropy of the classifier head on labeled source
    /// sequences. Touches theta_e and theta_omega only.
    Classification,
    /// mean_s ln d(s) + mean_t ln(1 - d(t)) on the domain head; the
    /// discriminator ascends this, the encoder descends it. Touches theta_e
    /// and theta_d only.
    Adversarial,
    /// gamma * classification + beta * adversarial; the inner-loop objective.
    Task { beta: f64, gamma: f64 },
}

/// One evaluation batch. `src`/`src_y` are labeled source sequences;
/// `tgt` are unlabeled target sequences (adversarial term only).
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub src: &'a [&'a [Vec<f64>]],
    pub src_y: &'a [f64],
    pub tgt: &'a [&'a [Vec<f64>]],
}

impl<'a> Batch<'a> {
    pub fn source_only(src: &'a [&'a [Vec<f64>]], src_y: &'a [f64]) -> Batch<'a> {
        Batch { src, src_y, tgt: &[] }
    }
}

/// Per-group gradients, same flat layouts as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S = f64> {
    pub e: Vec<S>,
    pub omega: Vec<S>,
    pub d: Vec<S>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros(cfg: &NetworkConfig) -> Gradients<S> {
        Gradients {
            e: vec![S::c(0.0); NetworkParams::encoder_len(cfg)],
            omega: vec![S::c(0.0); NetworkParams::head_len(cfg)],
            d: vec![S::c(0.0); NetworkParams::head_len(cfg)],
        }
    }

    pub fn scaled_add(&mut self, a: f64, other: &Gradients<S>) {
        let a = S::c(a);
        for (x, y) in self.e.iter_mut().zip(&other.e) {
            *x += a * *y;
        }
        for (x, y) in self.omega.iter_mut().zip(&other.omega) {
            *x += a * *y;
        }
        for (x, y) in self.d.iter_mut().zip(&other.d) {
            *x += a * *y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        let a = S::c(a);
        for x in self.e.iter_mut().chain(&mut self.omega).chain(&mut self.d) {
            *x *= a;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.e
            .iter()
            .chain(&self.omega)
            .chain(&self.d)
            .all(|x| x.v().is_finite())
    }
}

fn matvec<S: Scalar>(m: &[S], rows: usize, cols: usize, x: &[S]) -> Vec<S> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        let mut acc = S::c(0.0);
        for (w, v) in row.iter().zip(x) {
            acc += *w * *v;
        }
        out.push(acc);
    }
    out
}

/// m times a constant vector; inputs never carry derivatives.
fn matvec_lift<S: Scalar>(m: &[S], rows: usize, cols: usize, x: &[f64]) -> Vec<S> {
    debug_assert_eq!(x.len(), cols);
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        let mut acc = S::c(0.0);
        for (w, v) in row.iter().zip(x) {
            acc += *w * S::c(*v);
        }
        out.push(acc);
    }
    out
}

/// out += m^T y.
fn matvec_t_acc<S: Scalar>(m: &[S], rows: usize, cols: usize, y: &[S], out: &mut [S]) {
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        for (o, w) in out.iter_mut().zip(row) {
            *o += *w * y[i];
        }
    }
}

/// g += y x^T (row-major rows x cols).
fn outer_acc<S: Scalar>(g: &mut [S], y: &[S], x: &[S]) {
    debug_assert_eq!(g.len(), y.len() * x.len());
    for (i, yi) in y.iter().enumerate() {
        let row = &mut g[i * x.len()..(i + 1) * x.len()];
        for (gj, xj) in row.iter_mut().zip(x) {
            *gj += *yi * *xj;
        }
    }
}

fn outer_acc_lift<S: Scalar>(g: &mut [S], y: &[S], x: &[f64]) {
    debug_assert_eq!(g.len(), y.len() * x.len());
    for (i, yi) in y.iter().enumerate() {
        let row = &mut g[i * x.len()..(i + 1) * x.len()];
        for (gj, xj) in row.iter_mut().zip(x) {
            *gj += *yi * S::c(*xj);
        }
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::c(0.0);
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Everything the backward pass needs from one sequence's forward pass.
struct SeqTrace<S> {
    /// h_0..h_n; h_0 is all zeros.
    hs: Vec<Vec<S>>,
    zs: Vec<Vec<S>>,
    rs: Vec<Vec<S>>,
    cs: Vec<Vec<S>>,
    /// tanh(W_a h_t) per step.
    gs: Vec<Vec<S>>,
    /// Softmax attention weights.
    att: Vec<S>,
    feat: Vec<S>,
}

fn seq_forward<S: Scalar>(cfg: &NetworkConfig, te: &[S], xs: &[Vec<f64>]) -> SeqTrace<S> {
    let (d, h, a) = (cfg.input_dim, cfg.hidden_dim, cfg.attention_dim);
    let lay = EncLayout::new(cfg);
    debug_assert_eq!(te.len(), lay.len);
    let n = xs.len();
    let mut hs: Vec<Vec<S>> = Vec::with_capacity(n + 1);
    hs.push(vec![S::c(0.0); h]);
    let mut zs = Vec::with_capacity(n);
    let mut rs = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    for x in xs {
        debug_assert_eq!(x.len(), d);
        let hp = hs.last().expect("h_0 pushed above");
        let mut zpre = matvec_lift(lay.wz.of(te), h, d, x);
        for (acc, add) in zpre.iter_mut().zip(matvec(lay.uz.of(te), h, h, hp)) {
            *acc += add;
        }
        for (acc, b) in zpre.iter_mut().zip(lay.bz.of(te)) {
            *acc += *b;
        }
        let z: Vec<S> = zpre.into_iter().map(|v| v.sigmoid()).collect();

        let mut rpre = matvec_lift(lay.wr.of(te), h, d, x);
        for (acc, add) in rpre.iter_mut().zip(matvec(lay.ur.of(te), h, h, hp)) {
            *acc += add;
        }
        for (acc, b) in rpre.iter_mut().zip(lay.br.of(te)) {
            *acc += *b;
        }
        let r: Vec<S> = rpre.into_iter().map(|v| v.sigmoid()).collect();

        let rh: Vec<S> = r.iter().zip(hp).map(|(ri, hi)| *ri * *hi).collect();
        let mut cpre = matvec_lift(lay.wc.of(te), h, d, x);
        for (acc, add) in cpre.iter_mut().zip(matvec(lay.uc.of(te), h, h, &rh)) {
            *acc += add;
        }
        for (acc, b) in cpre.iter_mut().zip(lay.bc.of(te)) {
            *acc += *b;
        }
        let c: Vec<S> = cpre.into_iter().map(|v| v.tanh()).collect();

        let hn: Vec<S> = (0..h)
            .map(|i| (S::c(1.0) - z[i]) * hp[i] + z[i] * c[i])
            .collect();
        hs.push(hn);
        zs.push(z);
        rs.push(r);
        cs.push(c);
    }

    // Attention over all steps at once. Scores shifted by their max before
    // exponentiation; the shift is a constant so derivatives are unchanged.
    let mut gs = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for ht in hs.iter().skip(1) {
        let g: Vec<S> = matvec(lay.wa.of(te), a, h, ht).into_iter().map(|v| v.tanh()).collect();
        scores.push(dot(lay.va.of(te), &g));
        gs.push(g);
    }
    let (att, feat) = if n == 0 {
        (Vec::new(), vec![S::c(0.0); h])
    } else {
        let mx = scores.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.v()));
        let exps: Vec<S> = scores.iter().map(|s| (*s - S::c(mx)).exp()).collect();
        let mut tot = S::c(0.0);
        for e in &exps {
            tot += *e;
        }
        let att: Vec<S> = exps.into_iter().map(|e| e / tot).collect();
        let mut feat = vec![S::c(0.0); h];
        for (t, w) in att.iter().enumerate() {
            for (f, hv) in feat.iter_mut().zip(&hs[t + 1]) {
                *f += *w * *hv;
            }
        }
        (att, feat)
    };
    SeqTrace { hs, zs, rs, cs, gs, att, feat }
}

struct HeadTrace<S> {
    u: Vec<S>,
    prob: S,
    /// True when the sigmoid output hit the clamp; gradient through this
    /// head is zeroed for the sample.
    gated: bool,
}

fn head_forward<S: Scalar>(cfg: &NetworkConfig, th: &[S], feat: &[S]) -> HeadTrace<S> {
    let (h, hh) = (cfg.hidden_dim, cfg.head_hidden_dim);
    let lay = HeadLayout::new(cfg);
    debug_assert_eq!(th.len(), lay.len);
    let mut upre = matvec(lay.w1.of(th), hh, h, feat);
    for (acc, b) in upre.iter_mut().zip(lay.b1.of(th)) {
        *acc += *b;
    }
    let u: Vec<S> = upre.into_iter().map(|v| v.tanh()).collect();
    let q2 = dot(lay.w2.of(th), &u) + lay.b2.of(th)[0];
    let mut prob = q2.sigmoid();
    let mut gated = false;
    if prob.v() < PROB_FLOOR {
        prob = S::c(PROB_FLOOR);
        gated = true;
    } else if prob.v() > 1.0 - PROB_FLOOR {
        prob = S::c(1.0 - PROB_FLOOR);
        gated = true;
    }
    HeadTrace { u, prob, gated }
}

/// Backward through one head given dL/dq2; accumulates into `gh` and returns
/// dL/dfeature.
fn head_backward<S: Scalar>(
    cfg: &NetworkConfig,
    th: &[S],
    tr: &HeadTrace<S>,
    feat: &[S],
    dq2: S,
    gh: &mut [S],
) -> Vec<S> {
    let (h, hh) = (cfg.hidden_dim, cfg.head_hidden_dim);
    let lay = HeadLayout::new(cfg);
    lay.b2.of_mut(gh)[0] += dq2;
    let w2 = lay.w2.of(th);
    {
        let gw2 = lay.w2.of_mut(gh);
        for (g, ui) in gw2.iter_mut().zip(&tr.u) {
            *g += dq2 * *ui;
        }
    }
    let dupre: Vec<S> = (0..hh)
        .map(|i| dq2 * w2[i] * (S::c(1.0) - tr.u[i] * tr.u[i]))
        .collect();
    for (g, du) in lay.b1.of_mut(gh).iter_mut().zip(&dupre) {
        *g += *du;
    }
    outer_acc(lay.w1.of_mut(gh), &dupre, feat);
    let mut dfeat = vec![S::c(0.0); h];
    matvec_t_acc(lay.w1.of(th), hh, h, &dupre, &mut dfeat);
    dfeat
}

/// Backward through attention and the GRU recurrence; accumulates into `ge`.
fn seq_backward<S: Scalar>(
    cfg: &NetworkConfig,
    te: &[S],
    xs: &[Vec<f64>],
    tr: &SeqTrace<S>,
    dfeat: &[S],
    ge: &mut [S],
) {
    let (h, a) = (cfg.hidden_dim, cfg.attention_dim);
    let lay = EncLayout::new(cfg);
    let n = xs.len();
    if n == 0 {
        return;
    }
    // Direct contributions of the loss to each h_t, before the recurrence.
    let mut dh: Vec<Vec<S>> = vec![vec![S::c(0.0); h]; n + 1];
    let mut da = Vec::with_capacity(n);
    for t in 0..n {
        da.push(dot(dfeat, &tr.hs[t + 1]));
        for (d, f) in dh[t + 1].iter_mut().zip(dfeat) {
            *d += tr.att[t] * *f;
        }
    }
    // Softmax backward: ds_t = a_t (da_t - sum_u a_u da_u).
    let mut sdot = S::c(0.0);
    for (w, d) in tr.att.iter().zip(&da) {
        sdot += *w * *d;
    }
    let va = lay.va.of(te);
    for t in 0..n {
        let ds = tr.att[t] * (da[t] - sdot);
        let g = &tr.gs[t];
        for (gv, gi) in lay.va.of_mut(ge).iter_mut().zip(g) {
            *gv += ds * *gi;
        }
        let dgpre: Vec<S> =
            (0..a).map(|i| ds * va[i] * (S::c(1.0) - g[i] * g[i])).collect();
        outer_acc(lay.wa.of_mut(ge), &dgpre, &tr.hs[t + 1]);
        matvec_t_acc(lay.wa.of(te), a, h, &dgpre, &mut dh[t + 1]);
    }
    // BPTT. carry holds dL/dh_t flowing from steps after t.
    let mut carry = vec![S::c(0.0); h];
    for t in (0..n).rev() {
        let hp = &tr.hs[t];
        let z = &tr.zs[t];
        let r = &tr.rs[t];
        let c = &tr.cs[t];
        let x = &xs[t];
        let dht: Vec<S> = dh[t + 1].iter().zip(&carry).map(|(d, cr)| *d + *cr).collect();
        // h_t = (1 - z) h_{t-1} + z c
        let dz: Vec<S> = (0..h).map(|i| dht[i] * (c[i] - hp[i])).collect();
        let dc: Vec<S> = (0..h).map(|i| dht[i] * z[i]).collect();
        let mut dhp: Vec<S> = (0..h).map(|i| dht[i] * (S::c(1.0) - z[i])).collect();
        // c = tanh(W_c x + U_c (r . h_prev) + b_c)
        let dcpre: Vec<S> = (0..h).map(|i| dc[i] * (S::c(1.0) - c[i] * c[i])).collect();
        outer_acc_lift(lay.wc.of_mut(ge), &dcpre, x);
        for (g, d) in lay.bc.of_mut(ge).iter_mut().zip(&dcpre) {
            *g += *d;
        }
        let rh: Vec<S> = (0..h).map(|i| r[i] * hp[i]).collect();
        outer_acc(lay.uc.of_mut(ge), &dcpre, &rh);
        let mut drh = vec![S::c(0.0); h];
        matvec_t_acc(lay.uc.of(te), h, h, &dcpre, &mut drh);
        let dr: Vec<S> = (0..h).map(|i| drh[i] * hp[i]).collect();
        for i in 0..h {
            dhp[i] += drh[i] * r[i];
        }
        // r = sigmoid(W_r x + U_r h_prev + b_r)
        let drpre: Vec<S> = (0..h).map(|i| dr[i] * r[i] * (S::c(1.0) - r[i])).collect();
        outer_acc_lift(lay.wr.of_mut(ge), &drpre, x);
        outer_acc(lay.ur.of_mut(ge), &drpre, hp);
        for (g, d) in lay.br.of_mut(ge).iter_mut().zip(&drpre) {
            *g += *d;
        }
        matvec_t_acc(lay.ur.of(te), h, h, &drpre, &mut dhp);
        // z = sigmoid(W_z x + U_z h_prev + b_z)
        let dzpre: Vec<S> = (0..h).map(|i| dz[i] * z[i] * (S::c(1.0) - z[i])).collect();
        outer_acc_lift(lay.wz.of_mut(ge), &dzpre, x);
        outer_acc(lay.uz.of_mut(ge), &dzpre, hp);
        for (g, d) in lay.bz.of_mut(ge).iter_mut().zip(&dzpre) {
            *g += *d;
        }
        matvec_t_acc(lay.uz.of(te), h, h, &dzpre, &mut dhp);
        carry = dhp;
    }
    // h_0 is a constant, so the final carry is dropped.
}

fn bce_term<S: Scalar>(p: S, y: f64) -> S {
    -(S::c(y) * p.ln() + S::c(1.0 - y) * (S::c(1.0) - p).ln())
}

fn eval_classification<S: Scalar>(
    cfg: &NetworkConfig,
    te: &[S],
    tw: &[S],
    batch: &Batch<'_>,
) -> (S, Gradients<S>) {
    debug_assert_eq!(batch.src.len(), batch.src_y.len());
    let mut grads = Gradients::zeros(cfg);
    let mut loss = S::c(0.0);
    let n = batch.src.len();
    if n == 0 {
        return (loss, grads);
    }
    let inv_n = 1.0 / n as f64;
    for (seq, &y) in batch.src.iter().zip(batch.src_y) {
        let tr = seq_forward(cfg, te, seq);
        let head = head_forward(cfg, tw, &tr.feat);
        loss += bce_term(head.prob, y);
        // d(BCE)/dq2 = p - y when p = sigmoid(q2); zero when clamped.
        let dq2 = if head.gated {
            S::c(0.0)
        } else {
            (head.prob - S::c(y)) * S::c(inv_n)
        };
        let dfeat = head_backward(cfg, tw, &head, &tr.feat, dq2, &mut grads.omega);
        seq_backward(cfg, te, seq, &tr, &dfeat, &mut grads.e);
    }
    (loss * S::c(inv_n), grads)
}

fn eval_adversarial<S: Scalar>(
    cfg: &NetworkConfig,
    te: &[S],
    td: &[S],
    batch: &Batch<'_>,
) -> (S, Gradients<S>) {
    let mut grads = Gradients::zeros(cfg);
    let mut loss = S::c(0.0);
    let ns = batch.src.len();
    let nt = batch.tgt.len();
    if ns > 0 {
        let inv = 1.0 / ns as f64;
        for seq in batch.src {
            let tr = seq_forward(cfg, te, seq);
            let head = head_forward(cfg, td, &tr.feat);
            loss += head.prob.ln() * S::c(inv);
            // d(ln sigmoid(q2))/dq2 = 1 - d.
            let dq2 =
                if head.gated { S::c(0.0) } else { (S::c(1.0) - head.prob) * S::c(inv) };
            let dfeat = head_backward(cfg, td, &head, &tr.feat, dq2, &mut grads.d);
            seq_backward(cfg, te, seq, &tr, &dfeat, &mut grads.e);
        }
    }
    if nt > 0 {
        let inv = 1.0 / nt as f64;
        for seq in batch.tgt {
            let tr = seq_forward(cfg, te, seq);
            let head = head_forward(cfg, td, &tr.feat);
            loss += (S::c(1.0) - head.prob).ln() * S::c(inv);
            // d(ln(1 - sigmoid(q2)))/dq2 = -d.
            let dq2 = if head.gated { S::c(0.0) } else { -head.prob * S::c(inv) };
            let dfeat = head_backward(cfg, td, &head, &tr.feat, dq2, &mut grads.d);
            seq_backward(cfg, te, seq, &tr, &dfeat, &mut grads.e);
        }
    }
    (loss, grads)
}

/// Evaluates one batch under the given objective. Returns the loss and
/// per-group gradients. The classification path never touches theta_d and
/// the adversarial path never touches theta_omega, by construction; the
/// combined task objective therefore splits cleanly per group.
pub fn eval_batch<S: Scalar>(
    cfg: &NetworkConfig,
    te: &[S],
    tw: &[S],
    td: &[S],
    batch: &Batch<'_>,
    kind: LossKind,
) -> (S, Gradients<S>) {
    match kind {
        LossKind::Classification => eval_classification(cfg, te, tw, batch),
        LossKind::Adversarial => eval_adversarial(cfg, te, td, batch),
        LossKind::Task { beta, gamma } => {
            // A zero weight drops the whole term, forward pass included.
            let (lc, gc) = if gamma != 0.0 {
                eval_classification(cfg, te, tw, batch)
            } else {
                (S::c(0.0), Gradients::zeros(cfg))
            };
            let (lad, gad) = if beta != 0.0 {
                eval_adversarial(cfg, te, td, batch)
            } else {
                (S::c(0.0), Gradients::zeros(cfg))
            };
            let mut grads = Gradients::zeros(cfg);
            for (g, (c, ad)) in grads.e.iter_mut().zip(gc.e.iter().zip(&gad.e)) {
                *g = S::c(gamma) * *c + S::c(beta) * *ad;
            }
            for (g, c) in grads.omega.iter_mut().zip(&gc.omega) {
                *g = S::c(gamma) * *c;
            }
            for (g, ad) in grads.d.iter_mut().zip(&gad.d) {
                *g = S::c(beta) * *ad;
            }
            (S::c(gamma) * lc + S::c(beta) * lad, grads)
        }
    }
}

/// Forward-only loss evaluation; no gradients computed.
pub fn eval_loss(
    cfg: &NetworkConfig,
    te: &[f64],
    tw: &[f64],
    td: &[f64],
    batch: &Batch<'_>,
    kind: LossKind,
) -> f64 {
    match kind {
        LossKind::Classification => {
            let n = batch.src.len();
            if n == 0 {
                return 0.0;
            }
            let mut loss = 0.0;
            for (seq, &y) in batch.src.iter().zip(batch.src_y) {
                let tr = seq_forward::<f64>(cfg, te, seq);
                loss += bce_term(head_forward::<f64>(cfg, tw, &tr.feat).prob, y);
            }
            loss / n as f64
        }
        LossKind::Adversarial => {
            let mut loss = 0.0;
            if !batch.src.is_empty() {
                let inv = 1.0 / batch.src.len() as f64;
                for seq in batch.src {
                    let tr = seq_forward::<f64>(cfg, te, seq);
                    loss += head_forward::<f64>(cfg, td, &tr.feat).prob.ln() * inv;
                }
            }
            if !batch.tgt.is_empty() {
                let inv = 1.0 / batch.tgt.len() as f64;
                for seq in batch.tgt {
                    let tr = seq_forward::<f64>(cfg, te, seq);
                    loss += (1.0 - head_forward::<f64>(cfg, td, &tr.feat).prob).ln() * inv;
                }
            }
            loss
        }
        LossKind::Task { beta, gamma } => {
            let lc = if gamma != 0.0 {
                eval_loss(cfg, te, tw, td, batch, LossKind::Classification)
            } else {
                0.0
            };
            let lad = if beta != 0.0 {
                eval_loss(cfg, te, tw, td, batch, LossKind::Adversarial)
            } else {
                0.0
            };
            gamma * lc + beta * lad
        }
    }
}

/// Exact Hessian-vector product of the batch loss with respect to theta_e:
/// seeds the tangent direction through dual numbers and reads the derivative
/// of the hand-written gradient. Heads are held constant.
pub fn hvp_theta_e(
    cfg: &NetworkConfig,
    te: &[f64],
    tw: &[f64],
    td: &[f64],
    tangent: &[f64],
    batch: &Batch<'_>,
    kind: LossKind,
) -> Vec<f64> {
    debug_assert_eq!(te.len(), tangent.len());
    let te_d: Vec<Dual> = te.iter().zip(tangent).map(|(&v, &t)| Dual::var(v, t)).collect();
    let tw_d: Vec<Dual> = tw.iter().map(|&v| Dual::c(v)).collect();
    let td_d: Vec<Dual> = td.iter().map(|&v| Dual::c(v)).collect();
    let (_, g) = eval_batch::<Dual>(cfg, &te_d, &tw_d, &td_d, batch, kind);
    g.e.into_iter().map(|d| d.t).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> NetworkConfig {
        NetworkConfig {
            input_dim: 2,
            hidden_dim: 2,
            attention_dim: 2,
            head_hidden_dim: 2,
            init_seed: 7,
        }
    }

    fn put(buf: &mut [f64], seg: Seg, vals: &[f64]) {
        assert_eq!(seg.len, vals.len());
        buf[seg.off..seg.off + seg.len].copy_from_slice(vals);
    }

    // Fixture frozen from a scripted forward pass computed independently of
    // this implementation.
    fn fixture_params() -> NetworkParams {
        let cfg = tiny_cfg();
        let lay = EncLayout::new(&cfg);
        let mut te = vec![0.0; lay.len];
        put(&mut te, lay.wz, &[0.1, -0.2, 0.3, 0.1]);
        put(&mut te, lay.uz, &[0.05, 0.1, -0.1, 0.2]);
        put(&mut te, lay.bz, &[0.01, -0.02]);
        put(&mut te, lay.wr, &[-0.1, 0.2, 0.1, 0.05]);
        put(&mut te, lay.ur, &[0.2, -0.05, 0.0, 0.1]);
        put(&mut te, lay.br, &[0.0, 0.02]);
        put(&mut te, lay.wc, &[0.15, 0.1, -0.2, 0.25]);
        put(&mut te, lay.uc, &[0.1, 0.0, 0.05, -0.1]);
        put(&mut te, lay.bc, &[-0.01, 0.03]);
        put(&mut te, lay.wa, &[0.2, -0.1, 0.1, 0.3]);
        put(&mut te, lay.va, &[0.5, -0.4]);
        let hlay = HeadLayout::new(&cfg);
        let mut tw = vec![0.0; hlay.len];
        put(&mut tw, hlay.w1, &[0.3, -0.2, 0.1, 0.4]);
        put(&mut tw, hlay.b1, &[0.05, -0.05]);
        put(&mut tw, hlay.w2, &[0.6, -0.5]);
        put(&mut tw, hlay.b2, &[0.1]);
        let td = tw.clone();
        NetworkParams { config: cfg, theta_e: te, theta_omega: tw, theta_d: td }
    }

    fn fixture_seq() -> Seq {
        vec![vec![1.0, 0.5], vec![-0.3, 0.8], vec![0.2, -0.6]]
    }

    #[test]
    fn gru_and_attention_match_fixture() {
        let p = fixture_params();
        let tr = seq_forward::<f64>(&p.config, &p.theta_e, &fixture_seq());
        let want_h = [
            [0.09434246453747323, -0.02616151531855103],
            [0.06511728809757954, 0.1263114923145055],
            [0.009863671937193706, -0.018448630477953337],
        ];
        for (t, want) in want_h.iter().enumerate() {
            for (got, want) in tr.hs[t + 1].iter().zip(want) {
                assert!((got - want).abs() < 1e-14, "h_{} = {:?}", t + 1, tr.hs[t + 1]);
            }
        }
        let want_att = [0.3371134474011383, 0.32791646901902793, 0.3349700835798337];
        for (got, want) in tr.att.iter().zip(&want_att) {
            assert!((got - want).abs() < 1e-14, "att = {:?}", tr.att);
        }
        let aw: f64 = tr.att.iter().sum();
        assert!((aw - 1.0).abs() < 1e-12);
        let want_feat = [0.05646117965480613, 0.02642048064488881];
        for (got, want) in tr.feat.iter().zip(&want_feat) {
            assert!((got - want).abs() < 1e-14, "feat = {:?}", tr.feat);
        }
    }

    #[test]
    fn head_matches_fixture() {
        let p = fixture_params();
        let feat = [0.05646117965480613, 0.02642048064488881];
        let head = head_forward::<f64>(&p.config, &p.theta_omega, &feat);
        let want_u = [0.061576255336850114, -0.03377284049435893];
        for (got, want) in head.u.iter().zip(&want_u) {
            assert!((got - want).abs() < 1e-14, "u = {:?}", head.u);
        }
        assert!((head.prob - 0.5383823820613112).abs() < 1e-14);
        assert!(!head.gated);
        let p2 = p.classify_anomaly(&fixture_seq());
        assert!((p2 - 0.5383823820613112).abs() < 1e-14);
    }

    #[test]
    fn loss_terms_match_fixture() {
        // Mean BCE over p = [0.9, 0.2, 0.6], y = [1, 0, 1].
        let lc = (bce_term(0.9, 1.0) + bce_term(0.2, 0.0) + bce_term(0.6, 1.0)) / 3.0;
        assert!((lc - 0.2797765635793423).abs() < 1e-14);
        // mean ln d_s over [0.7, 0.6] plus mean ln(1 - d_t) over [0.3, 0.2].
        let lad = (0.7_f64.ln() + 0.6_f64.ln()) / 2.0
            + ((1.0 - 0.3_f64).ln() + (1.0 - 0.2_f64).ln()) / 2.0;
        assert!((lad - -0.7236595314788327).abs() < 1e-14);
    }

    fn seeded_params(seed: u64) -> NetworkParams {
        NetworkParams::init(NetworkConfig {
            input_dim: 3,
            hidden_dim: 4,
            attention_dim: 3,
            head_hidden_dim: 3,
            init_seed: seed,
        })
    }

    fn seeded_batch() -> (Vec<Seq>, Vec<f64>, Vec<Seq>) {
        let src = vec![
            vec![vec![0.4, -0.2, 0.1]],
            vec![vec![-0.5, 0.3, 0.2], vec![0.1, 0.1, -0.4]],
            vec![vec![0.2, 0.6, -0.1], vec![-0.3, 0.2, 0.5], vec![0.0, -0.6, 0.3]],
        ];
        let src_y = vec![1.0, 0.0, 1.0];
        let tgt = vec![
            vec![vec![0.3, 0.3, -0.2], vec![-0.1, 0.4, 0.1]],
            vec![vec![-0.4, -0.1, 0.6]],
        ];
        (src, src_y, tgt)
    }

    fn refs(seqs: &[Seq]) -> Vec<&[Vec<f64>]> {
        seqs.iter().map(|s| s.as_slice()).collect()
    }

    fn fd_check(params: &NetworkParams, batch: &Batch<'_>, kind: LossKind) {
        let h = 1e-5;
        let (_, grads) = params.loss_and_grad(batch, kind);
        let mut p = params.clone();
        let groups: [(fn(&mut NetworkParams) -> &mut Vec<f64>, &[f64]); 3] = [
            (|p| &mut p.theta_e, &grads.e),
            (|p| &mut p.theta_omega, &grads.omega),
            (|p| &mut p.theta_d, &grads.d),
        ];
        for (get, g) in groups {
            for i in 0..g.len() {
                let orig = get(&mut p)[i];
                get(&mut p)[i] = orig + h;
                let lp = p.loss(batch, kind);
                get(&mut p)[i] = orig - h;
                let lm = p.loss(batch, kind);
                get(&mut p)[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                // Central differences bottom out around 1e-11 absolute here,
                // which dominates for near-zero coordinates; hence the floor.
                let denom = fd.abs().max(g[i].abs()).max(1e-6);
                assert!(
                    (fd - g[i]).abs() / denom < 1e-4,
                    "coord {i}: analytic {} vs fd {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn classification_gradient_matches_finite_differences() {
        let params = seeded_params(11);
        let (src, src_y, _) = seeded_batch();
        let src = refs(&src);
        let batch = Batch::source_only(&src, &src_y);
        fd_check(&params, &batch, LossKind::Classification);
    }

    #[test]
    fn adversarial_gradient_matches_finite_differences() {
        let params = seeded_params(12);
        let (src, src_y, tgt) = seeded_batch();
        let (src, tgt) = (refs(&src), refs(&tgt));
        let batch = Batch { src: &src, src_y: &src_y, tgt: &tgt };
        fd_check(&params, &batch, LossKind::Adversarial);
    }

    #[test]
    fn task_gradient_matches_finite_differences() {
        let params = seeded_params(13);
        let (src, src_y, tgt) = seeded_batch();
        let (src, tgt) = (refs(&src), refs(&tgt));
        let batch = Batch { src: &src, src_y: &src_y, tgt: &tgt };
        fd_check(&params, &batch, LossKind::Task { beta: 2.0, gamma: 2.5 });
    }

    #[test]
    fn objectives_stay_in_their_parameter_groups() {
        let params = seeded_params(14);
        let (src, src_y, tgt) = seeded_batch();
        let (src, tgt) = (refs(&src), refs(&tgt));
        let batch = Batch { src: &src, src_y: &src_y, tgt: &tgt };
        let (lc, gc) = params.loss_and_grad(&batch, LossKind::Classification);
        assert!(gc.d.iter().all(|&g| g == 0.0), "classification touched theta_d");
        assert!(gc.omega.iter().any(|&g| g != 0.0));
        let (lad, gad) = params.loss_and_grad(&batch, LossKind::Adversarial);
        assert!(gad.omega.iter().all(|&g| g == 0.0), "adversarial touched theta_omega");
        assert!(gad.d.iter().any(|&g| g != 0.0));
        let (beta, gamma) = (2.0, 2.5);
        let (lt, gt) = params.loss_and_grad(&batch, LossKind::Task { beta, gamma });
        assert!((lt - (gamma * lc + beta * lad)).abs() < 1e-12);
        for ((t, c), ad) in gt.e.iter().zip(&gc.e).zip(&gad.e) {
            assert!((t - (gamma * c + beta * ad)).abs() < 1e-12);
        }
        for (t, c) in gt.omega.iter().zip(&gc.omega) {
            assert!((t - gamma * c).abs() < 1e-12);
        }
        for (t, ad) in gt.d.iter().zip(&gad.d) {
            assert!((t - beta * ad).abs() < 1e-12);
        }
    }

    #[test]
    fn hvp_matches_finite_difference_of_gradient() {
        let params = seeded_params(15);
        let (src, src_y, tgt) = seeded_batch();
        let (src, tgt) = (refs(&src), refs(&tgt));
        let batch = Batch { src: &src, src_y: &src_y, tgt: &tgt };
        let kind = LossKind::Task { beta: 2.0, gamma: 2.5 };
        let n = params.theta_e.len();
        // A fixed, reproducible tangent direction.
        let tangent: Vec<f64> =
            (0..n).map(|i| ((i as f64 * 0.37).sin() + 0.1) / 3.0).collect();
        let hv = hvp_theta_e(
            &params.config,
            &params.theta_e,
            &params.theta_omega,
            &params.theta_d,
            &tangent,
            &batch,
            kind,
        );
        let h = 1e-5;
        let mut plus = params.clone();
        let mut minus = params.clone();
        for i in 0..n {
            plus.theta_e[i] += h * tangent[i];
            minus.theta_e[i] -= h * tangent[i];
        }
        let (_, gp) = plus.loss_and_grad(&batch, kind);
        let (_, gm) = minus.loss_and_grad(&batch, kind);
        for i in 0..n {
            let fd = (gp.e[i] - gm.e[i]) / (2.0 * h);
            let denom = fd.abs().max(hv[i].abs()).max(1e-5);
            assert!((fd - hv[i]).abs() / denom < 1e-4, "coord {i}: {} vs {fd}", hv[i]);
        }
    }

    #[test]
    fn init_is_deterministic_and_respects_fan_in() {
        let a = seeded_params(42);
        let b = seeded_params(42);
        assert_eq!(a, b);
        let c = seeded_params(43);
        assert_ne!(a.theta_e, c.theta_e);
        let cfg = a.config;
        let lay = EncLayout::new(&cfg);
        assert!(lay.bz.of(&a.theta_e).iter().all(|&v| v == 0.0));
        assert!(lay.br.of(&a.theta_e).iter().all(|&v| v == 0.0));
        assert!(lay.bc.of(&a.theta_e).iter().all(|&v| v == 0.0));
        let bound_d = 1.0 / (cfg.input_dim as f64).sqrt();
        assert!(lay.wz.of(&a.theta_e).iter().all(|v| v.abs() < bound_d));
        let bound_h = 1.0 / (cfg.hidden_dim as f64).sqrt();
        assert!(lay.uz.of(&a.theta_e).iter().all(|v| v.abs() < bound_h));
        let hlay = HeadLayout::new(&cfg);
        assert!(hlay.b1.of(&a.theta_omega).iter().all(|&v| v == 0.0));
        assert_eq!(hlay.b2.of(&a.theta_omega)[0], 0.0);
        // The two heads see different draws from the shared stream.
        assert_ne!(a.theta_omega, a.theta_d);
    }

    #[test]
    fn clamped_probability_gates_the_gradient() {
        let mut params = seeded_params(16);
        // Saturate the classifier: huge output bias pushes p past the clamp.
        let hlay = HeadLayout::new(&params.config);
        params.theta_omega[hlay.b2.off] = 50.0;
        let seq: Seq = vec![vec![0.1, 0.2, 0.3]];
        let p = params.classify_anomaly(&seq);
        assert_eq!(p, 1.0 - PROB_FLOOR);
        let src = [seq.as_slice()];
        let batch = Batch::source_only(&src, &[1.0]);
        let (loss, grads) = params.loss_and_grad(&batch, LossKind::Classification);
        assert!(loss.is_finite());
        assert!(grads.e.iter().all(|&g| g == 0.0));
        assert!(grads.omega.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn empty_sequence_yields_zero_feature() {
        let params = seeded_params(17);
        let feat = params.feature_extract(&[]);
        assert!(feat.iter().all(|&f| f == 0.0));
        // Probability is then sigmoid(b2) through the head; finite and sane.
        let p = params.classify_anomaly(&[]);
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn forward_only_loss_agrees_with_gradient_path() {
        let params = seeded_params(19);
        let (src, src_y, tgt) = seeded_batch();
        let (src, tgt) = (refs(&src), refs(&tgt));
        let batch = Batch { src: &src, src_y: &src_y, tgt: &tgt };
        for kind in [
            LossKind::Classification,
            LossKind::Adversarial,
            LossKind::Task { beta: 2.0, gamma: 2.5 },
        ] {
            let quick = eval_loss(
                &params.config,
                &params.theta_e,
                &params.theta_omega,
                &params.theta_d,
                &batch,
                kind,
            );
            let (full, _) = params.loss_and_grad(&batch, kind);
            assert!((quick - full).abs() < 1e-14, "{kind:?}");
        }
    }

    #[test]
    fn attention_is_shift_invariant_for_long_sequences() {
        let params = seeded_params(18);
        let seq: Seq = (0..40)
            .map(|i| vec![(i as f64 * 0.11).sin(), (i as f64 * 0.07).cos(), 0.2])
            .collect();
        let tr = seq_forward::<f64>(&params.config, &params.theta_e, &seq);
        let sum: f64 = tr.att.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(tr.feat.iter().all(|f| f.is_finite()));
    }
}
