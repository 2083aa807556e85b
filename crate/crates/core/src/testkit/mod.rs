//! Deterministic scaffolding for end-to-end runs without a deep-learning
//! framework: a seeded generator, a small convolutional network with a
//! hand-written backward pass, and synthetic student/base fixtures.

mod fixtures;
mod rng;
mod toynet;

pub use fixtures::{
    gen_fixtures, gen_fixtures_with, in_mask_fraction, measure_scenario, write_fixture_files, FixtureConfig,
    FixtureSet, ScenarioMargins, FIXTURE_LAYER, IMAGE_SIZE,
};
pub use rng::SplitMix;
pub use toynet::{Forward, Gradients, ToyNet, CONV1_CHANNELS, CONV2_CHANNELS};
