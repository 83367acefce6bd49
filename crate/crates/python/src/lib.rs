//! Python bindings: grammar parameters, prior and posterior sampling,
//! shape documents and SVG rendering.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use shapegram::dp::{ChildCache, DpConfig, PosteriorConfig};
use shapegram::geometry::TriangulatedPolygon;
use shapegram::grid::Grid;
use shapegram::likelihood::LikelihoodConfig;
use shapegram::prior::{default_seed_edge, sample_shapes, SamplerConfig};
use shapegram::render::{render_svg as svg, Frame, Style};
use shapegram::rng::stream_rng;
use shapegram::shape_doc::{Provenance, ShapeDocument, ShapeRecord};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Tri = (usize, [(f64, f64); 3]);

#[pyclass(module = "shapegram_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct GrammarParams(shapegram::grammar::GrammarParams);

#[pymethods]
impl GrammarParams {
    #[new]
    pub fn new(t: [f64; 3]) -> PyResult<Self> {
        shapegram::grammar::GrammarParams::new(t).map(Self).map_err(err)
    }

    #[staticmethod]
    pub fn from_expectations(expected_triangles: f64, expected_junctions: f64) -> PyResult<Self> {
        shapegram::grammar::GrammarParams::from_expectations(expected_triangles, expected_junctions)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    pub fn t(&self) -> [f64; 3] {
        self.0.t
    }

    /// `(E(n), E(j), m)`.
    pub fn expected_counts(&self) -> (f64, f64, f64) {
        let s = self.0.expected_counts();
        (s.expected_n, s.expected_j, s.m)
    }

    fn __repr__(&self) -> String {
        format!("GrammarParams(t={:?})", self.0.t)
    }
}

#[pyclass(module = "shapegram_py", frozen, from_py_object)]
#[derive(Clone)]
pub struct Shape(TriangulatedPolygon);

#[pymethods]
impl Shape {
    /// `(type, ((x0, y0), (x1, y1), (x2, y2)))` per triangle; index 0 is the root.
    #[getter]
    pub fn triangles(&self) -> Vec<Tri> {
        self.0
            .triangles()
            .iter()
            .map(|t| (t.ttype.index(), t.x.map(|p| (p.x, p.y))))
            .collect()
    }

    /// `(parent, child)` pairs.
    #[getter]
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.0.links().to_vec()
    }

    pub fn type_counts(&self) -> [usize; 3] {
        self.0.type_counts()
    }

    /// Boundary vertices in order.
    pub fn boundary(&self) -> PyResult<Vec<(f64, f64)>> {
        Ok(self.0.boundary().map_err(err)?.iter().map(|p| (p.x, p.y)).collect())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Shape({} triangles)", self.0.len())
    }
}

#[pyclass(module = "shapegram_py", frozen)]
pub struct Image(shapegram::image::GrayImage);

#[pymethods]
impl Image {
    /// Row-major intensities in `[0, 1]`.
    #[new]
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> PyResult<Self> {
        shapegram::image::GrayImage::new(width, height, data).map(Self).map_err(err)
    }

    #[staticmethod]
    pub fn load(path: &str) -> PyResult<Self> {
        shapegram::image::load_image(path).map(Self).map_err(err)
    }

    /// Filled ellipses `(cx, cy, rx, ry)` at intensity 1 on 0.
    #[staticmethod]
    pub fn ellipses(width: usize, height: usize, ellipses: Vec<(f64, f64, f64, f64)>) -> PyResult<Self> {
        use shapegram::geometry::Point;
        use shapegram::synthetic::{render_blobs, Blob};
        let blobs: Vec<Blob> = ellipses
            .into_iter()
            .map(|(cx, cy, rx, ry)| Blob::ellipse(Point::new(cx, cy), rx, ry, 64))
            .collect();
        render_blobs(width, height, &blobs, 4).map(Self).map_err(err)
    }

    #[getter]
    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    pub fn height(&self) -> usize {
        self.0.height()
    }
}

#[pyclass(module = "shapegram_py", frozen)]
pub struct PosteriorSampler {
    inner: shapegram::dp::PosteriorSampler,
    grid: Grid,
    size: (usize, usize),
}

#[pymethods]
impl PosteriorSampler {
    #[new]
    #[pyo3(signature = (image, params, grid=(40, 40), depth=20, lambda_=15.0, l_max=8.0, smooth_sigma=1.0))]
    pub fn new(
        image: &Image,
        params: &GrammarParams,
        grid: (usize, usize),
        depth: usize,
        lambda_: f64,
        l_max: f64,
        smooth_sigma: f64,
    ) -> PyResult<Self> {
        let g = Grid::new(grid.0, grid.1).map_err(err)?;
        let cfg = PosteriorConfig {
            dp: DpConfig {
                depth,
                l_max,
                ..DpConfig::default()
            },
            likelihood: LikelihoodConfig {
                lambda: lambda_,
                smooth_sigma,
                ..LikelihoodConfig::default()
            },
        };
        let inner = shapegram::dp::PosteriorSampler::from_image(&image.0, g, &params.0, &cfg).map_err(err)?;
        Ok(PosteriorSampler {
            inner,
            grid: g,
            size: (image.0.width(), image.0.height()),
        })
    }

    /// Log of the total posterior mass of all shapes up to the depth bound.
    #[getter]
    pub fn log_normalizer(&self) -> f64 {
        self.inner.root_marginal().log_total()
    }

    /// `n` exact samples as `(shape, log_posterior)`; shapes are in grid units.
    #[pyo3(signature = (n, seed=1))]
    pub fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<(Shape, f64)>> {
        let mut cache = ChildCache::default();
        (0..n)
            .map(|i| {
                let s = self
                    .inner
                    .sample_with_cache(&mut stream_rng(seed, i as u64), &mut cache)
                    .map_err(err)?;
                Ok((Shape(s.polygon), s.log_posterior))
            })
            .collect()
    }

    /// Boundary overlay of `shapes` on `image` as SVG text.
    pub fn overlay_svg(&self, shapes: Vec<Shape>, image: &Image) -> String {
        let polys: Vec<_> = shapes.into_iter().map(|s| s.0).collect();
        let frame = Frame::grid(self.grid, self.size.0, self.size.1);
        svg(&polys, &frame, Some(&image.0), &Style::overlay())
    }
}

/// Prior samples grown from the unit seed edge; sample `i` uses stream `i`.
#[pyfunction]
#[pyo3(signature = (params, n, seed=1))]
pub fn sample_prior(params: &GrammarParams, n: usize, seed: u64) -> PyResult<Vec<Shape>> {
    let cfg = SamplerConfig {
        rng_seed: seed,
        ..SamplerConfig::default()
    };
    Ok(sample_shapes(&params.0, &cfg, n, default_seed_edge())
        .map_err(err)?
        .into_iter()
        .map(Shape)
        .collect())
}

/// `(t0, t1, t2)` for the given expected triangle and junction counts.
#[pyfunction]
pub fn params_from_expectations(expected_triangles: f64, expected_junctions: f64) -> PyResult<[f64; 3]> {
    shapegram::grammar::params_from_expectations(expected_triangles, expected_junctions).map_err(err)
}

/// Shapes drawn into one fitted SVG.
#[pyfunction]
#[pyo3(signature = (shapes, size=512.0))]
pub fn render_svg(shapes: Vec<Shape>, size: f64) -> String {
    let polys: Vec<_> = shapes.into_iter().map(|s| s.0).collect();
    svg(&polys, &Frame::fit(&polys, size), None, &Style::default())
}

/// Shape document JSON, as written by the command line tool.
#[pyfunction]
#[pyo3(signature = (shapes, seed=1))]
pub fn to_json(shapes: Vec<Shape>, seed: u64) -> String {
    let records = shapes.iter().map(|s| ShapeRecord::new(&s.0, None)).collect();
    ShapeDocument::new(
        Provenance {
            command: "python".into(),
            config_hash: String::new(),
            seed,
            first_sample: 0,
            image_hash: None,
            grid: None,
            image_size: None,
        },
        records,
    )
    .to_json()
}

#[pyfunction]
pub fn from_json(text: &str) -> PyResult<Vec<Shape>> {
    let doc = ShapeDocument::from_json(text).map_err(err)?;
    Ok(doc.polygons().map_err(err)?.into_iter().map(Shape).collect())
}

#[pymodule]
fn shapegram_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GrammarParams>()?;
    m.add_class::<Shape>()?;
    m.add_class::<Image>()?;
    m.add_class::<PosteriorSampler>()?;
    m.add_function(wrap_pyfunction!(sample_prior, m)?)?;
    m.add_function(wrap_pyfunction!(params_from_expectations, m)?)?;
    m.add_function(wrap_pyfunction!(render_svg, m)?)?;
    m.add_function(wrap_pyfunction!(to_json, m)?)?;
    m.add_function(wrap_pyfunction!(from_json, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_shapes_round_trip_through_json() {
        let p = GrammarParams::from_expectations(8.0, 0.5).unwrap();
        let shapes = sample_prior(&p, 5, 3).unwrap();
        let back = from_json(&to_json(shapes.clone(), 3)).unwrap();
        for (a, b) in shapes.iter().zip(&back) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.triangles(), b.triangles());
        }
    }

    #[test]
    fn posterior_samples_live_on_the_grid() {
        let img = Image::ellipses(32, 32, vec![(16.0, 16.0, 8.0, 6.0)]).unwrap();
        let p = GrammarParams::from_expectations(20.0, 1.0).unwrap();
        let s = PosteriorSampler::new(&img, &p, (8, 8), 3, 2.0, 4.0, 1.0).unwrap();
        assert!(s.log_normalizer().is_finite());
        for (shape, lp) in s.sample(10, 2).unwrap() {
            assert!(lp <= 0.0);
            for (_, xs) in shape.triangles() {
                for (x, y) in xs {
                    assert!(x.fract() == 0.0 && y.fract() == 0.0 && (0.0..8.0).contains(&x) && (0.0..8.0).contains(&y));
                }
            }
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(params_from_expectations(1.0, 0.0).is_err());
        assert_eq!(params_from_expectations(2.0, 0.0).unwrap(), [1.0, 0.0, 0.0]);
    }
}
