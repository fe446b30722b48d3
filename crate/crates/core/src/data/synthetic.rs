//! Seeded toy scenes standing in for detector features.
//!
//! Each scene places 2..=k coloured shapes on a 4×4 grid. Every object
//! becomes one feature row made of one-hot shape, colour, column and row
//! blocks plus Gaussian noise; each image gets three templated captions
//! (a count, a spatial relation and a location).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ImageRecord;

pub const SHAPES: [&str; 4] = ["circle", "square", "triangle", "star"];
pub const COLORS: [&str; 4] = ["red", "blue", "green", "yellow"];
pub const NUMBERS: [&str; 16] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
];
pub const GRID: usize = 4;
pub const MIN_FEATURE_DIM: usize = 16;
pub const NOISE_STD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SceneObject {
    pub shape: usize,
    pub color: usize,
    pub col: usize,
    pub row: usize,
    /// Index of the (shape, colour) group this object belongs to.
    pub group: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub objects: Vec<SceneObject>,
    pub grid: usize,
}

fn noun(shape: usize, count: usize) -> String {
    if count == 1 {
        SHAPES[shape].to_string()
    } else {
        format!("{}s", SHAPES[shape])
    }
}

impl SceneSpec {
    fn random<R: Rng>(k: usize, rng: &mut R) -> Self {
        let n = rng.random_range(2..=k);
        let n_groups = rng.random_range(1..=n.min(3));
        let mut combos: Vec<(usize, usize)> = (0..SHAPES.len())
            .flat_map(|s| (0..COLORS.len()).map(move |c| (s, c)))
            .collect();
        combos.shuffle(rng);
        let mut cells: Vec<usize> = (0..GRID * GRID).collect();
        cells.shuffle(rng);
        let objects = (0..n)
            .map(|i| {
                let group = if i < n_groups { i } else { rng.random_range(0..n_groups) };
                let (shape, color) = combos[group];
                SceneObject {
                    shape,
                    color,
                    col: cells[i] % GRID,
                    row: cells[i] / GRID,
                    group,
                }
            })
            .collect();
        SceneSpec { objects, grid: GRID }
    }

    /// One feature row per object: one-hot shape, colour, column and row
    /// blocks, zero padding up to `dim`.
    pub fn clean_features(&self, dim: usize) -> Tensor {
        let mut data = vec![0.0; self.objects.len() * dim];
        for (i, o) in self.objects.iter().enumerate() {
            let row = &mut data[i * dim..(i + 1) * dim];
            row[o.shape] = 1.0;
            row[4 + o.color] = 1.0;
            row[8 + o.col] = 1.0;
            row[12 + o.row] = 1.0;
        }
        Tensor::matrix(self.objects.len(), dim, data).expect("scene shape")
    }

    fn describe(o: &SceneObject) -> String {
        format!("{} {}", COLORS[o.color], SHAPES[o.shape])
    }

    /// The count, relation and location captions, in that order.
    pub fn captions(&self) -> Vec<String> {
        // largest group; ties go to the lowest (shape, colour)
        let mut counts: Vec<((usize, usize), usize)> = Vec::new();
        for o in &self.objects {
            match counts.iter_mut().find(|(key, _)| *key == (o.shape, o.color)) {
                Some((_, n)) => *n += 1,
                None => counts.push(((o.shape, o.color), 1)),
            }
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let ((shape, color), n) = counts[0];
        let verb = if n == 1 { "is" } else { "are" };
        let count = format!(
            "there {verb} {} {} {}",
            NUMBERS[n - 1],
            COLORS[color],
            noun(shape, n)
        );

        let key = |o: &&SceneObject| (o.col, o.row, o.shape, o.color);
        let left = self.objects.iter().min_by_key(key).expect("nonempty scene");
        let right = self.objects.iter().max_by_key(key).expect("nonempty scene");
        let relation = if left.col < right.col {
            format!("a {} left of a {}", Self::describe(left), Self::describe(right))
        } else {
            let vkey = |o: &&SceneObject| (o.row, o.shape, o.color);
            let top = self.objects.iter().min_by_key(vkey).expect("nonempty scene");
            let bottom = self.objects.iter().max_by_key(vkey).expect("nonempty scene");
            format!("a {} above a {}", Self::describe(top), Self::describe(bottom))
        };

        let vert = if left.row < GRID / 2 { "top" } else { "bottom" };
        let horiz = if left.col < GRID / 2 { "left" } else { "right" };
        let location = format!("a {} in the {vert} {horiz}", Self::describe(left));
        vec![count, relation, location]
    }
}

/// Generates `n_images` scenes with up to `k` objects each and `dim`-wide
/// feature rows. Features are rounded to `f32` so that the in-memory dataset
/// equals its on-disk form.
pub fn gen_synthetic(seed: u64, n_images: usize, k: usize, dim: usize) -> Result<Vec<ImageRecord>> {
    if dim < MIN_FEATURE_DIM {
        return Err(Error::Config(format!(
            "feature width {dim} is below the minimum of {MIN_FEATURE_DIM}"
        )));
    }
    if !(2..=GRID * GRID).contains(&k) {
        return Err(Error::Config(format!(
            "objects per image must be within 2..={}, got {k}",
            GRID * GRID
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    (0..n_images)
        .map(|i| {
            let scene = SceneSpec::random(k, &mut rng);
            let mut features = scene.clean_features(dim);
            for v in features.data_mut() {
                *v = (*v + noise.sample(&mut rng)) as f32 as f64;
            }
            Ok(ImageRecord {
                image_id: format!("img{i:05}"),
                features,
                captions: scene.captions(),
            })
        })
        .collect()
}
