//! Sample-point specifications: `--grid "axis=min:max:count"` and `--point`.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct GridError(pub String);

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisRange {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + step * i as f64 })
            .collect()
    }
}

/// Axis names are 1-based numbers, optionally prefixed with `x` or `y`.
fn axis_number(name: &str, dim: usize) -> Result<usize, GridError> {
    let digits = name.trim().trim_start_matches(['x', 'y']);
    match digits.parse::<usize>() {
        Ok(k) if (1..=dim).contains(&k) => Ok(k - 1),
        _ => Err(GridError(format!("unknown grid axis `{}`; use 1..={dim}", name.trim()))),
    }
}

fn number(text: &str, what: &str) -> Result<f64, GridError> {
    let v: f64 = text.trim().parse().map_err(|_| GridError(format!("bad {what} `{}`", text.trim())))?;
    if !v.is_finite() {
        return Err(GridError(format!("{what} must be finite")));
    }
    Ok(v)
}

fn range(text: &str) -> Result<AxisRange, GridError> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [v] => {
            let v = number(v, "value")?;
            Ok(AxisRange { min: v, max: v, count: 1 })
        }
        [lo, hi, n] => {
            let count: usize = n.trim().parse().map_err(|_| GridError(format!("bad count `{}`", n.trim())))?;
            if count == 0 {
                return Err(GridError("grid counts must be at least 1".into()));
            }
            Ok(AxisRange { min: number(lo, "minimum")?, max: number(hi, "maximum")?, count })
        }
        _ => Err(GridError(format!("expected min:max:count or a single value, got `{text}`"))),
    }
}

/// Parses any number of `axis=range` specs (comma separated, or repeated flags)
/// into one range per axis. Every axis must be given exactly once.
pub fn parse_grid(specs: &[String], dim: usize) -> Result<Vec<AxisRange>, GridError> {
    let mut axes: Vec<Option<AxisRange>> = vec![None; dim];
    for spec in specs {
        for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
            let (name, value) =
                item.split_once('=').ok_or_else(|| GridError(format!("expected axis=min:max:count, got `{item}`")))?;
            let k = axis_number(name, dim)?;
            if axes[k].is_some() {
                return Err(GridError(format!("axis {} given twice", k + 1)));
            }
            axes[k] = Some(range(value)?);
        }
    }
    axes.into_iter()
        .enumerate()
        .map(|(k, a)| a.ok_or_else(|| GridError(format!("grid axis {} is missing", k + 1))))
        .collect()
}

/// Grid points with the first axis varying slowest.
pub fn grid_points(axes: &[AxisRange]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let values = axis.values();
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

pub fn parse_point(text: &str, dim: usize) -> Result<Vec<f64>, GridError> {
    let p = text.split(',').map(|s| number(s, "coordinate")).collect::<Result<Vec<_>, _>>()?;
    if p.len() != dim {
        return Err(GridError(format!("point `{text}` has {} coordinates, expected {dim}", p.len())));
    }
    Ok(p)
}

/// Explicit points first, then grid points.
pub fn sample_points(points: &[String], grid: &[String], dim: usize) -> Result<Vec<Vec<f64>>, GridError> {
    let mut out = points.iter().map(|p| parse_point(p, dim)).collect::<Result<Vec<_>, _>>()?;
    if !grid.is_empty() {
        out.extend(grid_points(&parse_grid(grid, dim)?));
    }
    if out.is_empty() {
        return Err(GridError("no sample points; pass --grid or --point".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order_and_endpoints() {
        let axes = parse_grid(&["1=1:2:2,y2=0.5".into(), "x3=-1:1:3".into()], 3).unwrap();
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![1.0, 0.5, -1.0]);
        assert_eq!(pts[1], vec![1.0, 0.5, 0.0]);
        assert_eq!(pts[5], vec![2.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_errors() {
        assert!(parse_grid(&["1=0:1:0,2=0,3=0".into()], 3).is_err());
        assert!(parse_grid(&["1=0:1:2,2=0".into()], 3).is_err());
        assert!(parse_grid(&["4=0".into()], 3).is_err());
        assert!(parse_grid(&["1=0,1=1".into()], 3).is_err());
        assert!(parse_grid(&["1=0:inf:2,2=0,3=0".into()], 3).is_err());
        assert!(parse_point("1,2", 3).is_err());
    }
}
