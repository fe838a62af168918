//! Conditional velocity network, flow-matching training and checkpoints.

mod checkpoint;
mod net;
mod train;

pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, HEADER_LEN, MAGIC, VERSION};
pub use net::{time_features, Condition, Dense, NetConfig, NetVars, VelocityField, VelocityNet, TIME_FEATURES};
pub use train::{cfm_gradients, cfm_loss, train, CfmBatch, TrainConfig};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{grad_check, RngStream, Tensor};

    fn net(seed: u64) -> VelocityNet {
        let mut cfg = NetConfig::new(4, 2, 3);
        cfg.hidden = vec![16, 16];
        VelocityNet::new(cfg, &mut RngStream::new(seed)).unwrap()
    }

    #[test]
    fn embedding_indexing() {
        let n = net(0);
        let e = n.config().embed_dim;
        let rows = 2 * 3 + 1;
        assert_eq!(n.embed_condition(Condition::Null).unwrap().values(), &n.table()[(rows - 1) * e..]);
        assert_eq!(n.embed_condition(Condition::pair(0, 0)).unwrap().values(), &n.table()[..e]);
        assert_eq!(n.cond_index(Condition::pair(1, 2)).unwrap(), 5);
        assert!(n.embed_condition(Condition::pair(2, 0)).is_err());
        assert!(n.embed_condition(Condition::pair(0, 3)).is_err());

        let mut seen = Vec::new();
        for a in 0..2 {
            for b in 0..3 {
                let row = n.embed_condition(Condition::pair(a, b)).unwrap().into_values();
                assert!(!seen.contains(&row));
                seen.push(row);
            }
        }
    }

    #[test]
    fn velocity_shape_and_purity() {
        let n = net(1);
        let x = Tensor::vector(vec![0.1, -0.4, 2.0, 0.0]);
        let c = Condition::pair(1, 1);
        let v1 = n.velocity(&x, 0.3, c).unwrap();
        let v2 = n.velocity(&x, 0.3, c).unwrap();
        assert_eq!(v1.shape(), x.shape());
        assert_eq!(v1, v2);
        assert!(n.velocity(&Tensor::vector(vec![0.0; 3]), 0.3, c).is_err());
        assert!(n.velocity(&x, 1.5, c).is_err());
    }

    #[test]
    fn tracked_velocity_matches_plain_and_differentiates() {
        let n = net(2);
        let x = RngStream::new(3).normal(&[4]).unwrap();
        let c = Condition::pair(0, 2);
        let plain = n.velocity(&x, 0.7, c).unwrap();
        let mut g = crate::diffcore::Graph::new();
        let xv = g.input(&x);
        let v = VelocityField::velocity_tracked(&n, &mut g, xv, 0.7, c).unwrap();
        assert_eq!(g.value(v), plain.values());

        let err = grad_check(
            |g, x| {
                let v = VelocityField::velocity_tracked(&n, g, x, 0.7, c)?;
                let sq = g.mul(v, v)?;
                g.sum(sq)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
