//! Vehicle mobility on a Manhattan street grid.
//!
//! Streets run along the block boundaries: vertical streets at evenly spaced
//! x coordinates and horizontal streets at evenly spaced y coordinates, the
//! outermost ones lying on the area border. Vehicles drive on street
//! centrelines, may turn at intersections and reverse at the border.

use rand::Rng;

use crate::config::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    East,
    West,
    North,
    South,
}

impl Heading {
    pub fn unit(self) -> [f64; 2] {
        match self {
            Heading::East => [1.0, 0.0],
            Heading::West => [-1.0, 0.0],
            Heading::North => [0.0, 1.0],
            Heading::South => [0.0, -1.0],
        }
    }

    fn reversed(self) -> Self {
        match self {
            Heading::East => Heading::West,
            Heading::West => Heading::East,
            Heading::North => Heading::South,
            Heading::South => Heading::North,
        }
    }

    fn is_horizontal(self) -> bool {
        matches!(self, Heading::East | Heading::West)
    }

    /// The two perpendicular headings, left turn first.
    fn turns(self) -> [Heading; 2] {
        match self {
            Heading::East => [Heading::North, Heading::South],
            Heading::West => [Heading::South, Heading::North],
            Heading::North => [Heading::West, Heading::East],
            Heading::South => [Heading::East, Heading::West],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub position: [f64; 2],
    pub heading: Heading,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreetGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub width: f64,
    pub height: f64,
}

const GRID_EPS: f64 = 1e-9;

impl StreetGrid {
    pub fn new(config: &ScenarioConfig) -> Self {
        let line = |len: f64, blocks: usize| -> Vec<f64> {
            (0..=blocks).map(|i| len * i as f64 / blocks as f64).collect()
        };
        Self {
            xs: line(config.area_width_m, config.blocks_x),
            ys: line(config.area_height_m, config.blocks_y),
            width: config.area_width_m,
            height: config.area_height_m,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (-GRID_EPS..=self.width + GRID_EPS).contains(&p[0])
            && (-GRID_EPS..=self.height + GRID_EPS).contains(&p[1])
    }

    /// Drops a vehicle uniformly on the total street length, facing either way.
    pub fn place<R: Rng + ?Sized>(&self, speed: f64, rng: &mut R) -> VehicleState {
        let vertical_len = self.xs.len() as f64 * self.height;
        let horizontal_len = self.ys.len() as f64 * self.width;
        let u = rng.random::<f64>() * (vertical_len + horizontal_len);
        let flip = rng.random::<bool>();
        if u < vertical_len {
            let street = ((u / self.height) as usize).min(self.xs.len() - 1);
            let y = rng.random::<f64>() * self.height;
            VehicleState {
                position: [self.xs[street], y],
                heading: if flip { Heading::North } else { Heading::South },
                speed,
            }
        } else {
            let street = (((u - vertical_len) / self.width) as usize).min(self.ys.len() - 1);
            let x = rng.random::<f64>() * self.width;
            VehicleState {
                position: [x, self.ys[street]],
                heading: if flip { Heading::East } else { Heading::West },
                speed,
            }
        }
    }

    /// Next cross-street coordinate strictly ahead along `heading`, if any.
    fn next_crossing(&self, pos: [f64; 2], heading: Heading) -> Option<f64> {
        match heading {
            Heading::East => self.xs.iter().copied().find(|&x| x > pos[0] + GRID_EPS),
            Heading::West => self.xs.iter().rev().copied().find(|&x| x < pos[0] - GRID_EPS),
            Heading::North => self.ys.iter().copied().find(|&y| y > pos[1] + GRID_EPS),
            Heading::South => self.ys.iter().rev().copied().find(|&y| y < pos[1] - GRID_EPS),
        }
    }

    fn can_leave(&self, pos: [f64; 2], heading: Heading) -> bool {
        self.next_crossing(pos, heading).is_some()
    }
}

fn advance<R: Rng + ?Sized>(
    v: &mut VehicleState,
    grid: &StreetGrid,
    turn_probability: f64,
    mut remaining: f64,
    rng: &mut R,
) {
    let axis = |h: Heading| if h.is_horizontal() { 0 } else { 1 };
    // Each pass either finishes the move or reaches a crossing, so the loop is
    // bounded by the number of crossings covered plus border reflections.
    for _ in 0..10_000 {
        let Some(target) = grid.next_crossing(v.position, v.heading) else {
            v.heading = v.heading.reversed();
            continue;
        };
        let a = axis(v.heading);
        let gap = (target - v.position[a]).abs();
        if remaining < gap {
            v.position[a] += remaining * v.heading.unit()[a];
            return;
        }
        v.position[a] = target;
        remaining -= gap;
        if rng.random::<f64>() < turn_probability {
            let [left, right] = v.heading.turns();
            let first = if rng.random::<bool>() { left } else { right };
            let second = if first == left { right } else { left };
            if grid.can_leave(v.position, first) {
                v.heading = first;
            } else if grid.can_leave(v.position, second) {
                v.heading = second;
            }
        }
        if remaining <= 0.0 {
            return;
        }
    }
}

/// Moves every vehicle `speed * dt` metres along the grid.
pub fn update_mobility<R: Rng + ?Sized>(
    vehicles: &mut [VehicleState],
    config: &ScenarioConfig,
    grid: &StreetGrid,
    dt: f64,
    rng: &mut R,
) {
    for v in vehicles.iter_mut() {
        let distance = v.speed * dt;
        if distance > 0.0 {
            advance(v, grid, config.turn_probability, distance, rng);
        }
    }
}
