use tsood_tensor::{Padding, Var};

use super::{ModelConfig, Net, Result, RESNET_BLOCKS, RESNET_KERNELS};

fn bn_schema(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, c: usize) {
    for leaf in ["gamma", "beta", "running_mean", "running_var"] {
        out.push((format!("{prefix}.{leaf}"), vec![c]));
    }
}

pub(super) fn schema(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let w = cfg.width;
    let mut out = Vec::new();
    let mut c_in = cfg.in_channels;
    for b in 0..RESNET_BLOCKS {
        let mut c = c_in;
        for (k, &ks) in RESNET_KERNELS.iter().enumerate() {
            out.push((format!("block{b}.conv{k}.weight"), vec![w, c, ks]));
            bn_schema(&mut out, &format!("block{b}.bn{k}"), w);
            c = w;
        }
        if c_in != w {
            out.push((format!("block{b}.shortcut.weight"), vec![w, c_in, 1]));
            bn_schema(&mut out, &format!("block{b}.shortcut_bn"), w);
        }
        c_in = w;
    }
    out.push(("head.weight".into(), vec![cfg.n_classes, w]));
    out.push(("head.bias".into(), vec![cfg.n_classes]));
    out
}

/// Three residual blocks of conv-BN-ReLU triples, then global average
/// pooling over time.
pub(super) fn features(net: &mut Net<'_>, cfg: &ModelConfig, x: Var) -> Result<Var> {
    let t = net.tape;
    let mut h = x;
    let mut c_in = cfg.in_channels;
    for b in 0..RESNET_BLOCKS {
        let input = h;
        let mut y = h;
        for k in 0..RESNET_KERNELS.len() {
            let w = net.p(&format!("block{b}.conv{k}.weight"));
            y = t.conv1d(y, w, None, Padding::Same)?;
            y = net.batch_norm(&format!("block{b}.bn{k}"), y)?;
            if k + 1 < RESNET_KERNELS.len() {
                y = t.relu(y)?;
            }
        }
        let skip = if c_in != cfg.width {
            let w = net.p(&format!("block{b}.shortcut.weight"));
            let s = t.conv1d(input, w, None, Padding::Same)?;
            net.batch_norm(&format!("block{b}.shortcut_bn"), s)?
        } else {
            input
        };
        h = t.relu(t.add(y, skip)?)?;
        c_in = cfg.width;
    }
    Ok(t.global_avg_pool(h)?)
}
