use tsood_tensor::Var;

use super::{ModelConfig, Net, Result, TST_HEADS, TST_LAYERS};

pub(super) fn schema(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let w = cfg.width;
    let mut out = vec![
        ("input.weight".to_string(), vec![w, cfg.in_channels]),
        ("input.bias".to_string(), vec![w]),
        ("pos_embedding".to_string(), vec![cfg.seq_len, w]),
    ];
    let linear = |out: &mut Vec<(String, Vec<usize>)>, name: String, o: usize, i: usize| {
        out.push((format!("{name}.weight"), vec![o, i]));
        out.push((format!("{name}.bias"), vec![o]));
    };
    for l in 0..TST_LAYERS {
        for proj in ["query", "key", "value", "out"] {
            linear(&mut out, format!("encoder{l}.attn.{proj}"), w, w);
        }
        out.push((format!("encoder{l}.norm1.gamma"), vec![w]));
        out.push((format!("encoder{l}.norm1.beta"), vec![w]));
        linear(&mut out, format!("encoder{l}.ffn1"), 2 * w, w);
        linear(&mut out, format!("encoder{l}.ffn2"), w, 2 * w);
        out.push((format!("encoder{l}.norm2.gamma"), vec![w]));
        out.push((format!("encoder{l}.norm2.beta"), vec![w]));
    }
    linear(&mut out, "head".into(), cfg.n_classes, w);
    out
}

/// `[b, L, W] → [b·H, L, W/H]`.
fn split_heads(net: &Net<'_>, x: Var, b: usize, l: usize, w: usize) -> Result<Var> {
    let t = net.tape;
    let dh = w / TST_HEADS;
    let x = t.reshape(x, &[b, l, TST_HEADS, dh])?;
    let x = t.permute(x, &[0, 2, 1, 3])?;
    Ok(t.reshape(x, &[b * TST_HEADS, l, dh])?)
}

/// Input projection plus learned positional embedding, three post-norm
/// encoder layers, mean pooling over time.
pub(super) fn features(net: &mut Net<'_>, cfg: &ModelConfig, x: Var) -> Result<Var> {
    let t = net.tape;
    let b = t.shape(x)[0];
    let (l, w) = (cfg.seq_len, cfg.width);
    let dh = w / TST_HEADS;
    let xt = t.permute(x, &[0, 2, 1])?;
    let proj = net.linear("input", xt)?;
    let mut h = t.add(proj, net.p("pos_embedding"))?;
    for layer in 0..TST_LAYERS {
        let pre = format!("encoder{layer}");
        let q = split_heads(net, net.linear(&format!("{pre}.attn.query"), h)?, b, l, w)?;
        let k = split_heads(net, net.linear(&format!("{pre}.attn.key"), h)?, b, l, w)?;
        let v = split_heads(net, net.linear(&format!("{pre}.attn.value"), h)?, b, l, w)?;
        let scores = t.matmul(q, t.transpose(k, 1, 2)?)?;
        let scores = t.mul_scalar(scores, 1.0 / (dh as f64).sqrt())?;
        let attn = t.softmax(scores)?;
        net.tap(format!("{pre}.attention"), attn);
        let ctx = t.matmul(attn, v)?;
        let ctx = t.reshape(ctx, &[b, TST_HEADS, l, dh])?;
        let ctx = t.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = t.reshape(ctx, &[b, l, w])?;
        let attn_out = net.linear(&format!("{pre}.attn.out"), ctx)?;
        h = net.layer_norm(&format!("{pre}.norm1"), t.add(h, attn_out)?)?;
        let ff = t.relu(net.linear(&format!("{pre}.ffn1"), h)?)?;
        let ff = net.linear(&format!("{pre}.ffn2"), ff)?;
        h = net.layer_norm(&format!("{pre}.norm2"), t.add(h, ff)?)?;
    }
    Ok(t.mean_axis(h, 1)?)
}
