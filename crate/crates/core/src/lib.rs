//! Workbench for jamming detection on 5G-NR SSB signals: synthesize and
//! synchronize CP-OFDM frames, build imbalanced feature datasets, balance
//! them with a conditional WGAN-GP, train convolutional autoencoder
//! detectors, and report FAR/MDR-style metrics.

pub mod dataset;
pub mod gan;
pub mod physync;
pub mod seed;
