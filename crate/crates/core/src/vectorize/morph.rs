//! Binary raster operations on row-major, y-outer masks.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<bool>,
}

/// 8-neighborhood offsets in clockwise order starting north (+y).
pub const RING: [(i64, i64); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

impl Mask {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny, data: vec![false; nx * ny] }
    }

    pub fn get(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny && self.data[j as usize * self.nx + i as usize]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[j * self.nx + i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j))).filter(|&(i, j)| self.data[j * self.nx + i])
    }

    fn neighbors(&self, i: usize, j: usize) -> [bool; 8] {
        RING.map(|(di, dj)| self.get(i as i64 + di, j as i64 + dj))
    }

    pub fn dilate(&self) -> Mask {
        let mut out = Mask::new(self.nx, self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let v = self.data[j * self.nx + i] || self.neighbors(i, j).iter().any(|b| *b);
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn erode(&self) -> Mask {
        let mut out = Mask::new(self.nx, self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                // cells beyond the border count as set so the frame does not eat into shapes
                let all = RING.iter().all(|(di, dj)| {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    a < 0 || b < 0 || a as usize >= self.nx || b as usize >= self.ny || self.get(a, b)
                });
                out.set(i, j, self.data[j * self.nx + i] && all);
            }
        }
        out
    }

    /// Dilation followed by erosion.
    pub fn close(&self) -> Mask {
        self.dilate().erode()
    }

    /// Sets every unset cell not 4-connected to the border.
    pub fn fill_holes(&self) -> Mask {
        let mut outside = vec![false; self.data.len()];
        let mut stack = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                if (i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny) && !self.data[j * self.nx + i] {
                    outside[j * self.nx + i] = true;
                    stack.push((i, j));
                }
            }
        }
        while let Some((i, j)) = stack.pop() {
            for (di, dj) in [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)] {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || b < 0 || a as usize >= self.nx || b as usize >= self.ny {
                    continue;
                }
                let k = b as usize * self.nx + a as usize;
                if !self.data[k] && !outside[k] {
                    outside[k] = true;
                    stack.push((a as usize, b as usize));
                }
            }
        }
        Mask { nx: self.nx, ny: self.ny, data: outside.iter().map(|o| !o).collect() }
    }

    /// 8-connected components, each listed in row-major order.
    pub fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let mut label = vec![usize::MAX; self.data.len()];
        let mut out = Vec::new();
        for (i0, j0) in self.cells().collect::<Vec<_>>() {
            if label[j0 * self.nx + i0] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = Vec::new();
            let mut stack = vec![(i0, j0)];
            label[j0 * self.nx + i0] = id;
            while let Some((i, j)) = stack.pop() {
                comp.push((i, j));
                for (di, dj) in RING {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if self.get(a, b) && label[b as usize * self.nx + a as usize] == usize::MAX {
                        label[b as usize * self.nx + a as usize] = id;
                        stack.push((a as usize, b as usize));
                    }
                }
            }
            comp.sort_by_key(|&(i, j)| (j, i));
            out.push(comp);
        }
        out
    }

    /// Number of unset→set transitions around the 8-neighborhood.
    pub fn crossing_number(&self, i: usize, j: usize) -> usize {
        let n = self.neighbors(i, j);
        (0..8).filter(|&k| !n[k] && n[(k + 1) % 8]).count()
    }

    /// Zhang-Suen thinning to a one-cell-wide skeleton.
    pub fn thin(&self) -> Mask {
        let mut m = self.clone();
        loop {
            let mut changed = false;
            for pass in 0..2 {
                let mut remove = Vec::new();
                for (i, j) in m.cells() {
                    // p2..p9 = N, NE, E, SE, S, SW, W, NW
                    let n = m.neighbors(i, j);
                    let b = n.iter().filter(|v| **v).count();
                    if !(2..=6).contains(&b) || m.crossing_number(i, j) != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                    let ok = if pass == 0 { !(p2 && p4 && p6) && !(p4 && p6 && p8) } else { !(p2 && p4 && p8) && !(p2 && p6 && p8) };
                    if ok {
                        remove.push((i, j));
                    }
                }
                changed |= !remove.is_empty();
                for (i, j) in remove {
                    m.set(i, j, false);
                }
            }
            if !changed {
                return m;
            }
        }
    }
}

/// Splits a skeleton into ordered cell paths. Cells with three or more
/// branches are junctions; they and their neighbors end paths.
pub fn trace_paths(skel: &Mask) -> Vec<Vec<(usize, usize)>> {
    let mut body = skel.clone();
    // clearing the whole 3x3 block keeps arms from touching diagonally
    for (i, j) in skel.cells() {
        if skel.crossing_number(i, j) >= 3 {
            for (di, dj) in RING.iter().copied().chain([(0, 0)]) {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if skel.get(a, b) {
                    body.set(a as usize, b as usize, false);
                }
            }
        }
    }
    let mut visited = Mask::new(skel.nx, skel.ny);
    let mut paths = Vec::new();
    let degree = |m: &Mask, i: usize, j: usize| RING.iter().filter(|(di, dj)| m.get(i as i64 + di, j as i64 + dj)).count();
    // open paths from their endpoints first, then whatever loops remain
    let mut starts: Vec<(usize, usize)> = body.cells().filter(|&(i, j)| degree(&body, i, j) <= 1).collect();
    starts.extend(body.cells().filter(|&(i, j)| degree(&body, i, j) > 1));
    for (i0, j0) in starts {
        if visited.get(i0 as i64, j0 as i64) {
            continue;
        }
        let mut path = vec![(i0, j0)];
        visited.set(i0, j0, true);
        let (mut i, mut j) = (i0, j0);
        loop {
            // edge neighbors before diagonal ones so staircase corners are not skipped
            let next = [0usize, 2, 4, 6, 1, 3, 5, 7].iter().map(|&k| RING[k]).find_map(|(di, dj)| {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                (body.get(a, b) && !visited.get(a, b)).then_some((a as usize, b as usize))
            });
            let Some((a, b)) = next else { break };
            visited.set(a, b, true);
            path.push((a, b));
            (i, j) = (a, b);
        }
        paths.push(path);
    }
    paths
}
