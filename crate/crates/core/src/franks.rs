//! Conservation rules for dislocation-line networks: strength is
//! constant along a line, and signed strengths at a branch point sum to
//! zero. Both are faces of the same fact: a boundary has no boundary.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::currents::TestForm;
use crate::defaults::Defaults;
use crate::error::{CoreError, Result};
use crate::geometry::{gauss_legendre, Kahan, Region};
use crate::symexpr::ScalarExpr;

/// One oriented dislocation line with a scalar strength. An optional
/// nonconstant weight models a line whose strength varies (which the
/// rules must flag).
#[derive(Debug, Clone)]
pub struct Edge {
    pub polyline: Vec<Vec<f64>>,
    pub strength: f64,
    pub weight: Option<ScalarExpr>,
}

/// Lines meeting at interior nodes inside an open-box domain; edges end
/// either at a listed node or on the domain's topological boundary.
#[derive(Debug, Clone)]
pub struct DislocationNetwork {
    domain: Region,
    nodes: Vec<Vec<f64>>,
    edges: Vec<Edge>,
}

/// Where an edge endpoint attaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attachment {
    Node(usize),
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleVerdict {
    Consistent,
    ViolatesBranching,
    ViolatesConstancy,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeSum {
    pub node: Vec<f64>,
    /// Σ ± strength: + for edges leaving the node, − for edges ending there.
    pub sum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeConstancy {
    pub edge: usize,
    /// Raw residuals `-∫_L f du` per probe station.
    pub residuals: Vec<f64>,
    /// Largest |residual| / (1-D probe mass along the line).
    pub max_normalized: f64,
    pub constant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RuleReport {
    pub verdict: RuleVerdict,
    pub node_sums: Vec<NodeSum>,
    pub edge_constancy: Vec<EdgeConstancy>,
    pub branching_tolerance: f64,
}

impl DislocationNetwork {
    pub fn new(domain: Region, nodes: Vec<Vec<f64>>, edges: Vec<Edge>) -> Result<Self> {
        let dim = domain.dim();
        for n in &nodes {
            if n.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: n.len(),
                });
            }
        }
        for (i, e) in edges.iter().enumerate() {
            if e.polyline.len() < 2 {
                return Err(CoreError::Invalid(format!(
                    "edge {i} needs at least two polyline points"
                )));
            }
            for p in &e.polyline {
                if p.len() != dim {
                    return Err(CoreError::DimensionMismatch {
                        expected: dim,
                        got: p.len(),
                    });
                }
            }
            if let Some(u) = &e.weight {
                if u.dim() != dim {
                    return Err(CoreError::DimensionMismatch {
                        expected: dim,
                        got: u.dim(),
                    });
                }
            }
        }
        let net = DislocationNetwork {
            domain,
            nodes,
            edges,
        };
        // every endpoint must attach somewhere
        for i in 0..net.edges.len() {
            net.attachment(i, true)?;
            net.attachment(i, false)?;
        }
        Ok(net)
    }

    pub fn domain(&self) -> &Region {
        &self.domain
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn attachment(&self, edge: usize, start: bool) -> Result<Attachment> {
        let snap = Defaults::get().boundary_snap;
        let poly = &self.edges[edge].polyline;
        let p = if start { &poly[0] } else { poly.last().unwrap() };
        for (i, n) in self.nodes.iter().enumerate() {
            let d: f64 = p
                .iter()
                .zip(n.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d <= snap {
                return Ok(Attachment::Node(i));
            }
        }
        if self.distance_to_boundary(p) <= snap {
            return Ok(Attachment::Boundary);
        }
        Err(CoreError::Invalid(format!(
            "edge {edge} endpoint {p:?} is neither a node nor on the domain boundary"
        )))
    }

    fn distance_to_boundary(&self, p: &[f64]) -> f64 {
        self.domain
            .base_box()
            .iter()
            .zip(p.iter())
            .map(|(&(lo, hi), &x)| (x - lo).abs().min((hi - x).abs()))
            .fold(f64::INFINITY, f64::min)
    }

    fn node_is_interior(&self, node: &[f64]) -> bool {
        self.distance_to_boundary(node) > Defaults::get().boundary_snap
    }
}

/// `∂D[f] = Σ_i a_i (f(end_i) - f(start_i))`: the telescoped line
/// integral of `df` along each edge. Edges reaching the boundary
/// contribute nothing there because `f` vanishes near it.
pub fn boundary_eval(net: &DislocationNetwork, f: &TestForm) -> Result<f64> {
    if f.degree() != 0 {
        return Err(CoreError::DegreeMismatch {
            context: "network boundary evaluation",
            expected: 0,
            got: f.degree(),
        });
    }
    let strictly_inside = f
        .support()
        .iter()
        .zip(net.domain.base_box().iter())
        .all(|(&(lo, hi), &(a, b))| lo > a && hi < b);
    if !strictly_inside {
        return Err(CoreError::SupportEscapesRegion);
    }
    let coeff = match f.form().coeffs().next() {
        None => return Ok(0.0),
        Some((_, c)) => c.clone(),
    };
    let mut acc = Kahan::default();
    for e in net.edges() {
        let start = coeff.eval(&e.polyline[0]).map_err(CoreError::Eval)?;
        let end = coeff
            .eval(e.polyline.last().unwrap())
            .map_err(CoreError::Eval)?;
        acc.add(e.strength * (end - start));
    }
    Ok(acc.total())
}

/// Checks branching sums at interior nodes and, where a nonconstant
/// weight is declared, strength constancy along the edge.
pub fn check_rules(net: &DislocationNetwork) -> Result<RuleReport> {
    let defaults = Defaults::get();

    // branching: + at the start node, − at the end node
    let mut sums = vec![0.0f64; net.nodes().len()];
    for i in 0..net.edges().len() {
        let a = net.edges()[i].strength;
        if let Attachment::Node(k) = net.attachment(i, true)? {
            sums[k] += a;
        }
        if let Attachment::Node(k) = net.attachment(i, false)? {
            sums[k] -= a;
        }
    }
    let node_sums: Vec<NodeSum> = net
        .nodes()
        .iter()
        .zip(&sums)
        .filter(|(n, _)| net.node_is_interior(n))
        .map(|(n, &sum)| NodeSum {
            node: n.clone(),
            sum,
        })
        .collect();
    let branching_ok = node_sums
        .iter()
        .all(|s| s.sum.abs() <= defaults.branching_tolerance);

    // constancy: residual -∫_L f du per bump probe station
    let mut edge_constancy = Vec::new();
    for (i, e) in net.edges().iter().enumerate() {
        let Some(u) = &e.weight else {
            edge_constancy.push(EdgeConstancy {
                edge: i,
                residuals: Vec::new(),
                max_normalized: 0.0,
                constant: true,
            });
            continue;
        };
        let (residuals, max_normalized) = constancy_residuals(e, u)?;
        edge_constancy.push(EdgeConstancy {
            edge: i,
            constant: max_normalized <= defaults.closedness_threshold,
            residuals,
            max_normalized,
        });
    }
    let constancy_ok = edge_constancy.iter().all(|e| e.constant);

    let verdict = if !branching_ok {
        RuleVerdict::ViolatesBranching
    } else if !constancy_ok {
        RuleVerdict::ViolatesConstancy
    } else {
        RuleVerdict::Consistent
    };
    Ok(RuleReport {
        verdict,
        node_sums,
        edge_constancy,
        branching_tolerance: defaults.branching_tolerance,
    })
}

/// `-∫_L f du` for bump probes `f` stationed along the edge, by
/// per-segment Gauss quadrature of `-f (∇u · t)`; also returns the
/// largest residual normalized by the probe's 1-D mass on the line.
pub fn constancy_residuals(edge: &Edge, u: &ScalarExpr) -> Result<(Vec<f64>, f64)> {
    let dim = u.dim();
    let grads: Vec<ScalarExpr> = (1..=dim).map(|i| u.diff(i)).collect();
    let (nodes, weights) = gauss_legendre(12);

    let mut seg_lengths = Vec::new();
    for pair in edge.polyline.windows(2) {
        let l: f64 = pair[0]
            .iter()
            .zip(&pair[1])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        seg_lengths.push(l);
    }
    let total: f64 = seg_lengths.iter().sum();
    let radius = (0.15 * total).min(0.2);
    let stations = 3usize;

    let mut residuals = Vec::with_capacity(stations);
    let mut max_normalized = 0.0f64;
    for j in 0..stations {
        let t_station = radius + (total - 2.0 * radius) * j as f64 / (stations - 1).max(1) as f64;
        let mut remaining = t_station;
        let mut seg = 0;
        while seg + 1 < seg_lengths.len() && remaining > seg_lengths[seg] {
            remaining -= seg_lengths[seg];
            seg += 1;
        }
        let frac = remaining / seg_lengths[seg].max(1e-300);
        let a = &edge.polyline[seg];
        let b = &edge.polyline[seg + 1];
        let center: Vec<f64> = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| x + frac * (y - x))
            .collect();
        let f = ScalarExpr::bump_at(radius, &center);

        // -∫ f (∇u · t) dt and ∫ f dt, segment by segment
        let mut acc = Kahan::default();
        let mut mass = Kahan::default();
        let mut cursor = 0.0;
        for (s, pair) in edge.polyline.windows(2).enumerate() {
            let len = seg_lengths[s];
            let dir: Vec<f64> = pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(x, y)| (y - x) / len.max(1e-300))
                .collect();
            // the station bump reaches at most `radius` along the line
            if cursor + len < t_station - radius - 1e-12 || cursor > t_station + radius + 1e-12 {
                cursor += len;
                continue;
            }
            for (&z, &w) in nodes.iter().zip(&weights) {
                let t = 0.5 * len * (z + 1.0);
                let point: Vec<f64> = pair[0]
                    .iter()
                    .zip(&dir)
                    .map(|(x, d)| x + d * t)
                    .collect();
                let fv = f.eval(&point).map_err(CoreError::Eval)?;
                if fv == 0.0 {
                    continue;
                }
                let mut du_dt = 0.0;
                for (g, d) in grads.iter().zip(&dir) {
                    if *d != 0.0 {
                        du_dt += g.eval(&point).map_err(CoreError::Eval)? * d;
                    }
                }
                acc.add(-0.5 * len * w * fv * du_dt);
                mass.add(0.5 * len * w * fv);
            }
            cursor += len;
        }
        let residual = acc.total();
        residuals.push(residual);
        max_normalized = max_normalized.max(residual.abs() / mass.total().max(1e-300));
    }
    Ok((residuals, max_normalized))
}

// --- JSON -------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    polyline: Vec<Vec<f64>>,
    strength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    domain: Region,
    nodes: Vec<Vec<f64>>,
    edges: Vec<EdgeJson>,
}

impl Serialize for DislocationNetwork {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkJson {
            domain: self.domain.clone(),
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson {
                    polyline: e.polyline.clone(),
                    strength: e.strength,
                    weight: e.weight.as_ref().map(|u| u.to_string()),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DislocationNetwork {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = NetworkJson::deserialize(deserializer)?;
        let dim = raw.domain.dim();
        let edges: Vec<Edge> = raw
            .edges
            .into_iter()
            .map(|e| -> Result<Edge> {
                Ok(Edge {
                    polyline: e.polyline,
                    strength: e.strength,
                    weight: e.weight.map(|t| ScalarExpr::parse(&t, dim)).transpose()?,
                })
            })
            .collect::<Result<_>>()
            .map_err(D::Error::custom)?;
        DislocationNetwork::new(raw.domain, raw.nodes, edges).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y_junction(strengths: [f64; 3]) -> DislocationNetwork {
        // three edges leaving the origin for the boundary of (-1,1)^3
        let node = vec![0.0, 0.0, 0.0];
        let targets = [
            vec![1.0, 0.0, 0.0],
            vec![-1.0, 0.6, 0.0],
            vec![0.0, -1.0, 0.2],
        ];
        let edges = targets
            .iter()
            .zip(strengths)
            .map(|(t, a)| Edge {
                polyline: vec![node.clone(), t.clone()],
                strength: a,
                weight: None,
            })
            .collect();
        DislocationNetwork::new(Region::cube(3, 1.0), vec![node], edges).unwrap()
    }

    #[test]
    fn straight_edge_through_the_domain_is_silent() {
        let net = DislocationNetwork::new(
            Region::cube(3, 1.0),
            vec![],
            vec![Edge {
                polyline: vec![vec![-1.0, 0.1, 0.0], vec![1.0, 0.1, 0.0]],
                strength: 2.0,
                weight: None,
            }],
        )
        .unwrap();
        let f = TestForm::bump_probe(&[0.0, 0.1, 0.0], 0.3, &[]).unwrap();
        assert_eq!(boundary_eval(&net, &f).unwrap(), 0.0);
    }

    #[test]
    fn branching_sum_rule() {
        let good = y_junction([1.0, 2.0, -3.0]);
        let f = TestForm::bump_probe(&[0.0, 0.0, 0.0], 0.3, &[]).unwrap();
        assert_eq!(boundary_eval(&good, &f).unwrap(), 0.0);
        let report = check_rules(&good).unwrap();
        assert_eq!(report.verdict, RuleVerdict::Consistent);
        assert_eq!(report.node_sums[0].sum, 0.0);

        let bad = y_junction([1.0, 2.0, -2.0]);
        // f(X) = 1 at the node: |∂D[f]| = |node sum| * f(X)
        let v = boundary_eval(&bad, &f).unwrap();
        assert!((v.abs() - 1.0).abs() < 1e-12, "got {v}");
        let report = check_rules(&bad).unwrap();
        assert_eq!(report.verdict, RuleVerdict::ViolatesBranching);
        assert!((report.node_sums[0].sum - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn single_line_ending_inside_violates() {
        let node = vec![0.2, 0.0, 0.0];
        let net = DislocationNetwork::new(
            Region::cube(3, 1.0),
            vec![node.clone()],
            vec![Edge {
                polyline: vec![node, vec![1.0, 0.0, 0.0]],
                strength: 0.7,
                weight: None,
            }],
        )
        .unwrap();
        let report = check_rules(&net).unwrap();
        assert_eq!(report.verdict, RuleVerdict::ViolatesBranching);
        assert!((report.node_sums[0].sum - 0.7).abs() < 1e-15);
    }

    #[test]
    fn dangling_endpoint_is_rejected() {
        let result = DislocationNetwork::new(
            Region::cube(3, 1.0),
            vec![],
            vec![Edge {
                polyline: vec![vec![0.3, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
                strength: 1.0,
                weight: None,
            }],
        );
        assert!(result.is_err());
    }

    #[test]
    fn constancy_flags_nonconstant_weight() {
        let dim = 3;
        let edge = |weight: Option<ScalarExpr>| Edge {
            polyline: vec![vec![0.0, -1.0, 0.0], vec![0.0, 1.0, 0.0]],
            strength: 1.0,
            weight,
        };
        let constant = DislocationNetwork::new(
            Region::cube(3, 1.0),
            vec![],
            vec![edge(Some(ScalarExpr::constant(4.0, dim)))],
        )
        .unwrap();
        let report = check_rules(&constant).unwrap();
        assert_eq!(report.verdict, RuleVerdict::Consistent);
        assert!(report.edge_constancy[0].max_normalized <= 1e-9);

        let varying = DislocationNetwork::new(
            Region::cube(3, 1.0),
            vec![],
            vec![edge(Some(ScalarExpr::parse("y", dim).unwrap()))],
        )
        .unwrap();
        let report = check_rules(&varying).unwrap();
        assert_eq!(report.verdict, RuleVerdict::ViolatesConstancy);
        // du = dy along the line: |residual| / mass = 1 exactly
        assert!(
            (report.edge_constancy[0].max_normalized - 1.0).abs() < 1e-9,
            "normalized {}",
            report.edge_constancy[0].max_normalized
        );
    }

    #[test]
    fn orientation_antisymmetry() {
        let net = y_junction([1.0, 2.0, -2.0]);
        // reverse edge 2 and negate its strength: same functional
        let mut edges: Vec<Edge> = net.edges().to_vec();
        let mut rev = edges[2].polyline.clone();
        rev.reverse();
        edges[2] = Edge {
            polyline: rev,
            strength: -edges[2].strength,
            weight: None,
        };
        let flipped =
            DislocationNetwork::new(net.domain().clone(), net.nodes().to_vec(), edges).unwrap();
        for (cx, cy) in [(0.0, 0.0), (0.3, -0.2), (-0.2, 0.25)] {
            let f = TestForm::bump_probe(&[cx, cy, 0.0], 0.25, &[]).unwrap();
            let a = boundary_eval(&net, &f).unwrap();
            let b = boundary_eval(&flipped, &f).unwrap();
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn consistent_network_boundary_vanishes_on_many_probes() {
        let net = y_junction([0.7, 1.3, -2.0]);
        let mut state = 0xabcdef12345u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let c = [next() * 1.2 - 0.6, next() * 1.2 - 0.6, next() * 1.2 - 0.6];
            let f = TestForm::bump_probe(&c, 0.2, &[]).unwrap();
            let v = boundary_eval(&net, &f).unwrap();
            assert!(v.abs() <= 1e-9, "residual {v:e} at {c:?}");
        }
    }

    #[test]
    fn network_json_round_trip() {
        let net = y_junction([1.0, 2.0, -3.0]);
        let text = serde_json::to_string(&net).unwrap();
        let back: DislocationNetwork = serde_json::from_str(&text).unwrap();
        assert_eq!(back.edges().len(), 3);
        let f = TestForm::bump_probe(&[0.0, 0.0, 0.0], 0.3, &[]).unwrap();
        assert_eq!(
            boundary_eval(&net, &f).unwrap().to_bits(),
            boundary_eval(&back, &f).unwrap().to_bits()
        );
    }
}
