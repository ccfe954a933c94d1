//! Whole-model parameter bundle and plain (no-gradient) scoring.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::discriminator::{score_candidate, DiscriminatorParams};
use crate::encoder::{encode, Activation, EncoderParams, IncidenceGroups};
use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::hypergraph::Hypergraph;

/// Shape configuration shared by all three networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub channels: usize,
    pub noise_dim: usize,
}

impl ModelDims {
    /// Width of node embeddings (and of the generator latent): the encoder
    /// output, which is the raw feature width when there are no layers.
    pub fn latent_dim(&self) -> usize {
        if self.layers == 0 {
            self.feature_dim
        } else {
            self.embed_dim
        }
    }
}

/// All learnable weights of the encoder, generator and discriminator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
}

impl ModelParams {
    pub fn init<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        let encoder = EncoderParams::init(
            dims.feature_dim,
            dims.embed_dim,
            dims.layers,
            Activation::LeakyRelu(0.01),
            rng,
        );
        let latent = dims.latent_dim();
        let generator =
            GeneratorParams::init(dims.num_nodes, latent, dims.channels, dims.noise_dim, rng);
        let discriminator = DiscriminatorParams::init(latent, rng);
        ModelParams { encoder, generator, discriminator }
    }
}

/// A parameterized model pinned to a dataset shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub dims: ModelDims,
    pub params: ModelParams,
}

impl Model {
    pub fn init<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        Model { dims, params: ModelParams::init(dims, rng) }
    }

    /// Check that the model was built for this hypergraph's shape.
    pub fn check_compatible(&self, h: &Hypergraph) -> Result<()> {
        if self.dims.num_nodes != h.num_nodes() || self.dims.feature_dim != h.features().cols() {
            return Err(Error::Checkpoint(format!(
                "model built for {} nodes x {} features, dataset has {} x {}",
                self.dims.num_nodes,
                self.dims.feature_dim,
                h.num_nodes(),
                h.features().cols()
            )));
        }
        Ok(())
    }

    /// Score candidate node sets: encode P over the given edge subset, pool
    /// and predict each set. One tape, forward only.
    pub fn score_sets(
        &self,
        h: &Hypergraph,
        groups: &IncidenceGroups,
        sets: &[Vec<usize>],
    ) -> Result<Vec<f64>> {
        self.check_compatible(h)?;
        let mut tape = Tape::new();
        let enc = self.params.encoder.bind(&mut tape);
        let disc = self.params.discriminator.bind(&mut tape);
        let x = tape.leaf(h.features().clone());
        let (p, _q) = encode(&mut tape, &enc, groups, x)?;
        let mut scores = Vec::with_capacity(sets.len());
        for set in sets {
            let y = score_candidate(&mut tape, &disc, p, set, None)?;
            scores.push(tape.scalar_value(y));
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::rng::named_stream;

    fn toy() -> (Hypergraph, IncidenceGroups) {
        let h = Hypergraph::new(
            vec![vec![0, 1, 2], vec![2, 3], vec![3, 4, 5]],
            Matrix::from_rows(&[
                vec![0.8, -0.2],
                vec![0.1, 0.4],
                vec![-0.5, 0.9],
                vec![0.3, 0.3],
                vec![-0.7, -0.1],
                vec![0.6, -0.6],
            ]),
        )
        .unwrap();
        let groups = IncidenceGroups::full(&h);
        (h, groups)
    }

    #[test]
    fn scores_are_deterministic_and_bounded() {
        let (h, groups) = toy();
        let dims = ModelDims {
            num_nodes: 6,
            feature_dim: 2,
            embed_dim: 4,
            layers: 2,
            channels: 4,
            noise_dim: 3,
        };
        let model = Model::init(dims, &mut named_stream(21, "init"));
        let sets = vec![vec![0, 1], vec![3, 4, 5], vec![2]];
        let s1 = model.score_sets(&h, &groups, &sets).unwrap();
        let s2 = model.score_sets(&h, &groups, &sets).unwrap();
        assert_eq!(
            s1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            s2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(s1.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn incompatible_dataset_is_a_checkpoint_error() {
        let (h, groups) = toy();
        let dims = ModelDims {
            num_nodes: 9,
            feature_dim: 2,
            embed_dim: 4,
            layers: 1,
            channels: 4,
            noise_dim: 3,
        };
        let model = Model::init(dims, &mut named_stream(22, "init"));
        assert!(matches!(
            model.score_sets(&h, &groups, &[vec![0]]),
            Err(Error::Checkpoint(_))
        ));
    }
}
