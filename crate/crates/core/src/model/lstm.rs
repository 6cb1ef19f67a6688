use tsood_tensor::{Tensor, Var};

use super::{ModelConfig, Net, Result, LSTM_LAYERS};

pub(super) fn schema(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let h = cfg.width;
    let mut out = Vec::new();
    let mut input = cfg.in_channels;
    for l in 0..LSTM_LAYERS {
        out.push((format!("lstm{l}.weight_ih"), vec![4 * h, input]));
        out.push((format!("lstm{l}.weight_hh"), vec![4 * h, h]));
        out.push((format!("lstm{l}.bias"), vec![4 * h]));
        input = h;
    }
    out.push(("fc.weight".into(), vec![cfg.width, h]));
    out.push(("fc.bias".into(), vec![cfg.width]));
    out.push(("head.weight".into(), vec![cfg.n_classes, cfg.width]));
    out.push(("head.bias".into(), vec![cfg.n_classes]));
    out
}

/// One unidirectional layer over `x: [b, L, in]`. Gate order i, f, g, o.
/// Returns the hidden state at every step as `[b, L, H]`.
fn layer(net: &mut Net<'_>, idx: usize, x: Var, hidden: usize) -> Result<Var> {
    let t = net.tape;
    let shape = t.shape(x);
    let (b, l) = (shape[0], shape[1]);
    let w_hh = net.p(&format!("lstm{idx}.weight_hh"));
    let w_hh_t = t.transpose(w_hh, 0, 1)?;
    let bias = net.p(&format!("lstm{idx}.bias"));
    let w_ih = net.p(&format!("lstm{idx}.weight_ih"));
    let flat = t.reshape(x, &[b * l, shape[2]])?;
    let xw = t.linear(flat, w_ih, Some(bias))?;
    let xw = t.reshape(xw, &[b, l, 4 * hidden])?;

    let mut h = t.constant(Tensor::zeros(&[b, hidden]));
    let mut c = t.constant(Tensor::zeros(&[b, hidden]));
    let mut outputs = Vec::with_capacity(l);
    for step in 0..l {
        let xt = t.reshape(t.slice(xw, 1, step, step + 1)?, &[b, 4 * hidden])?;
        let z = t.add(xt, t.matmul(h, w_hh_t)?)?;
        let gate = |k: usize| t.slice(z, 1, k * hidden, (k + 1) * hidden);
        let i = t.sigmoid(gate(0)?)?;
        let f = t.sigmoid(gate(1)?)?;
        let g = t.tanh(gate(2)?)?;
        let o = t.sigmoid(gate(3)?)?;
        c = t.add(t.mul(f, c)?, t.mul(i, g)?)?;
        h = t.mul(o, t.tanh(c)?)?;
        outputs.push(t.reshape(h, &[b, 1, hidden])?);
    }
    Ok(t.concat(&outputs, 1)?)
}

/// Two stacked layers; the last hidden state of the top layer feeds a
/// fully connected ReLU layer whose output is the pre-logit feature.
pub(super) fn features(net: &mut Net<'_>, cfg: &ModelConfig, x: Var) -> Result<Var> {
    let t = net.tape;
    let mut seq = t.permute(x, &[0, 2, 1])?;
    for idx in 0..LSTM_LAYERS {
        seq = layer(net, idx, seq, cfg.width)?;
    }
    let b = t.shape(x)[0];
    let last = t.reshape(t.slice(seq, 1, cfg.seq_len - 1, cfg.seq_len)?, &[b, cfg.width])?;
    net.tap("lstm.last_hidden", last);
    Ok(t.relu(net.linear("fc", last)?)?)
}
