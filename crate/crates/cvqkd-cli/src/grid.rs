//! Parameter grids given on the command line, either a single number or a
//! `start:stop:count` triple with both endpoints included exactly.

/// Parses a grid argument. A bare number is a one-point grid; a triple
/// `start:stop:count` places `count` evenly spaced points with the first
/// and last bit-identical to `start` and `stop`. Descending grids are
/// allowed.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [single] => {
            let v = parse_number(single)?;
            Ok(vec![v])
        }
        [start, stop, count] => {
            let start = parse_number(start)?;
            let stop = parse_number(stop)?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| format!("grid count {count:?} is not a positive integer"))?;
            if count == 0 {
                return Err("grid count must be at least 1".into());
            }
            if count == 1 {
                if start != stop {
                    return Err(format!(
                        "a 1-point grid needs start = stop, got {start}:{stop}"
                    ));
                }
                return Ok(vec![start]);
            }
            let step = (stop - start) / (count - 1) as f64;
            Ok((0..count)
                .map(|i| {
                    if i == 0 {
                        start
                    } else if i == count - 1 {
                        stop
                    } else {
                        start + step * i as f64
                    }
                })
                .collect())
        }
        _ => Err(format!(
            "grid {text:?} must be a number or start:stop:count"
        )),
    }
}

fn parse_number(text: &str) -> Result<f64, String> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| format!("{text:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{text:?} is not finite"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let grid = parse_grid("0.1:0.9:7").unwrap();
        assert_eq!(grid.len(), 7);
        assert_eq!(grid[0].to_bits(), 0.1f64.to_bits());
        assert_eq!(grid[6].to_bits(), 0.9f64.to_bits());
        for pair in grid.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn descending_grids_work() {
        let grid = parse_grid("1:0.2:5").unwrap();
        assert_eq!(grid.len(), 5);
        assert_eq!(grid[0].to_bits(), 1.0f64.to_bits());
        assert_eq!(grid[4].to_bits(), 0.2f64.to_bits());
        for (i, v) in grid.iter().enumerate().take(4).skip(1) {
            assert!((v - (1.0 - 0.2 * i as f64)).abs() < 1e-12);
            assert!(grid[i - 1] > *v && *v > grid[i + 1]);
        }
    }

    #[test]
    fn single_numbers_and_degenerate_triples() {
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("0.5:0.5:1").unwrap(), vec![0.5]);
        assert!(parse_grid("0.5:0.6:1").is_err());
        assert!(parse_grid("0.5:0.6:0").is_err());
        assert!(parse_grid("a:b:3").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("inf").is_err());
        assert!(parse_grid("1:2:2.5").is_err());
    }
}
