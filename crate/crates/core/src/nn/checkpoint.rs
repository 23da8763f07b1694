//! Network checkpoints.
//!
//! Layout: magic `SEIW`, format version u16, layer count u16, a layer table
//! (one tagged entry per layer with its hyperparameters), then for each
//! trainable layer the weight and bias tensors as little-endian f32.

use std::fs;
use std::path::Path;

use super::{LayerSpec, Network, NnError, Padding, Scalar};

const MAGIC: &[u8; 4] = b"SEIW";
const FORMAT_VERSION: u16 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NnError + '_ {
    move |source| NnError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, detail: impl Into<String>) -> NnError {
    NnError::Checkpoint {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn spec_tag(spec: &LayerSpec) -> (u8, [u32; 5]) {
    match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: (kh, kw),
            padding,
        } => (
            1,
            [
                in_channels as u32,
                out_channels as u32,
                kh as u32,
                kw as u32,
                match padding {
                    Padding::Same => 0,
                    Padding::Valid => 1,
                },
            ],
        ),
        LayerSpec::Dense {
            in_features,
            out_features,
        } => (2, [in_features as u32, out_features as u32, 0, 0, 0]),
        LayerSpec::Relu => (3, [0; 5]),
        LayerSpec::Sigmoid => (4, [0; 5]),
        LayerSpec::MaxPool2d { pool: (ph, pw) } => (5, [ph as u32, pw as u32, 0, 0, 0]),
        LayerSpec::Upsample2d { factor: (fh, fw) } => (6, [fh as u32, fw as u32, 0, 0, 0]),
        LayerSpec::Embedding { vocab, dim } => (7, [vocab as u32, dim as u32, 0, 0, 0]),
        LayerSpec::Softmax => (8, [0; 5]),
        LayerSpec::Flatten => (9, [0; 5]),
    }
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, path: &Path) -> Result<(), NnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.layers().len() as u16).to_le_bytes());
    for layer in net.layers() {
        let (tag, params) = spec_tag(&layer.spec);
        buf.push(tag);
        for p in params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    for layer in net.layers() {
        if layer.spec.param_shapes().is_none() {
            continue;
        }
        for tensor in [&layer.weights, &layer.bias] {
            buf.extend_from_slice(&(tensor.len() as u64).to_le_bytes());
            for v in tensor.data() {
                buf.extend_from_slice(&v.to_f32c().to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(io_err(path))
}

/// Loads parameters into an architecture-compatible network. The layer
/// table must match the network exactly.
pub fn load_checkpoint<T: Scalar>(net: &mut Network<T>, path: &Path) -> Result<(), NnError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut cur = 0usize;
    let take = |cur: &mut usize, n: usize| -> Result<&[u8], NnError> {
        if *cur + n > bytes.len() {
            return Err(format_err(path, "truncated"));
        }
        let s = &bytes[*cur..*cur + n];
        *cur += n;
        Ok(s)
    };

    if take(&mut cur, 4)? != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let version = u16::from_le_bytes(take(&mut cur, 2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let count = u16::from_le_bytes(take(&mut cur, 2)?.try_into().unwrap()) as usize;
    if count != net.layers().len() {
        return Err(format_err(
            path,
            format!("layer count {count} != network {}", net.layers().len()),
        ));
    }
    for (i, layer) in net.layers().iter().enumerate() {
        let tag = take(&mut cur, 1)?[0];
        let mut params = [0u32; 5];
        for p in &mut params {
            *p = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap());
        }
        let (want_tag, want_params) = spec_tag(&layer.spec);
        if tag != want_tag || params != want_params {
            return Err(format_err(
                path,
                format!("layer {i} table entry does not match the network architecture"),
            ));
        }
    }
    for li in 0..net.layers().len() {
        if net.layers()[li].spec.param_shapes().is_none() {
            continue;
        }
        for which in 0..2 {
            let len = u64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap()) as usize;
            let layer = &mut net.layers_mut()[li];
            let tensor = if which == 0 {
                &mut layer.weights
            } else {
                &mut layer.bias
            };
            if len != tensor.len() {
                return Err(format_err(
                    path,
                    format!("layer {li} tensor length {len} != expected {}", tensor.len()),
                ));
            }
            let raw = take(&mut cur, 4 * len)?;
            let layer = &mut net.layers_mut()[li];
            let tensor = if which == 0 {
                &mut layer.weights
            } else {
                &mut layer.bias
            };
            for (j, v) in tensor.data_mut().iter_mut().enumerate() {
                let f = f32::from_le_bytes(raw[4 * j..4 * j + 4].try_into().unwrap());
                *v = T::from_f32c(f);
            }
        }
    }
    if cur != bytes.len() {
        return Err(format_err(path, "trailing bytes after parameter tensors"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TensorND;

    fn demo_net(seed: u64) -> Network<f32> {
        Network::new(
            vec![2, 4, 8],
            vec![
                LayerSpec::Conv2d {
                    in_channels: 2,
                    out_channels: 3,
                    kernel: (1, 3),
                    padding: Padding::Same,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 3 * 4 * 8,
                    out_features: 2,
                },
                LayerSpec::Sigmoid,
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_restores_exact_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.seiw");
        let net = demo_net(404);
        save_checkpoint(&net, &path).unwrap();
        let mut other = demo_net(999);
        load_checkpoint(&mut other, &path).unwrap();
        for (a, b) in net.layers().iter().zip(other.layers()) {
            assert_eq!(a.weights.data(), b.weights.data());
            assert_eq!(a.bias.data(), b.bias.data());
        }
        // Same forward output too.
        let x = TensorND::from_fn(&[2, 4, 8], |i| (i as f32 * 0.11).sin());
        let mut net = net;
        let mut other = other;
        assert_eq!(
            net.infer(&x).unwrap().data(),
            other.infer(&x).unwrap().data()
        );
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.seiw");
        save_checkpoint(&demo_net(1), &path).unwrap();
        let mut wrong = Network::<f32>::new(
            vec![2, 4, 8],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 64,
                    out_features: 2,
                },
            ],
            0,
        )
        .unwrap();
        assert!(load_checkpoint(&mut wrong, &path).is_err());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.seiw");
        std::fs::write(&path, b"WXYZ").unwrap();
        let mut net = demo_net(0);
        let err = load_checkpoint(&mut net, &path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }
}
