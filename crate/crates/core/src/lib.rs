//! A stochastic grammar over triangulated polygons: a prior sampler for
//! random shapes and an exact dynamic-programming sampler for shapes
//! conditioned on a grayscale image.
//!
//! ```no_run
//! use shapegram::dp::{PosteriorConfig, PosteriorSampler};
//! use shapegram::grammar::GrammarParams;
//! use shapegram::grid::Grid;
//! use shapegram::image::load_image;
//!
//! let image = load_image("blob.png")?;
//! let params = GrammarParams::from_expectations(20.0, 1.0)?;
//! let sampler = PosteriorSampler::from_image(&image, Grid::new(40, 40)?, &params, &PosteriorConfig::default())?;
//! for s in sampler.sample_many(10, 1)? {
//!     println!("{} triangles, log p = {}", s.polygon.len(), s.log_posterior);
//! }
//! # Ok::<(), shapegram::Error>(())
//! ```

pub mod cache;
pub mod cli;
pub mod config;
pub mod dp;
pub mod geometry;
pub mod grammar;
pub mod grid;
pub mod image;
pub mod likelihood;
pub mod logspace;
pub mod prior;
pub mod render;
pub mod rng;
pub mod shape_doc;
pub mod synthetic;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Grammar(#[from] grammar::GrammarError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Likelihood(#[from] likelihood::LikelihoodError),
    #[error(transparent)]
    Prior(#[from] prior::PriorError),
    #[error(transparent)]
    Posterior(#[from] dp::DpError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Document(#[from] shape_doc::DocError),
    #[error(transparent)]
    Cache(#[from] cache::CacheError),
}
