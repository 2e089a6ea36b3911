//! Local DC network model built from PTDF sensitivities.
//!
//! Curtailment removes generation, so its PTDF columns are negated once at
//! load time. After that every flow update is a plain sum.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scenario::ScenarioConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("duplicate line name '{0}'")]
    DuplicateLine(String),
    #[error("PTDF for line '{line}' and node '{node}' is {value}, outside [-1, 1]")]
    PtdfRange { line: String, node: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub line_names: Vec<String>,
    pub curtail_site_names: Vec<String>,
    pub battery_node: String,
    pub slack_bus: String,
    /// Flow change per MW injected by the battery, one entry per line.
    pub l_batt: DVector<f64>,
    /// Flow change per MW curtailed, lines × sites (already negated).
    pub l_curt: DMatrix<f64>,
}

impl NetworkModel {
    pub fn n_lines(&self) -> usize {
        self.line_names.len()
    }

    pub fn n_sites(&self) -> usize {
        self.curtail_site_names.len()
    }

    /// `F + L_batt·d_batt + L_curt·d_curt + w`.
    pub fn flow_update(
        &self,
        flows: &DVector<f64>,
        d_batt: f64,
        d_curt_effective: &DVector<f64>,
        w_flow: &DVector<f64>,
    ) -> Result<DVector<f64>, GridError> {
        let nl = self.n_lines();
        for (what, got, expected) in [
            ("flows", flows.len(), nl),
            ("w_flow", w_flow.len(), nl),
            ("d_curt_effective", d_curt_effective.len(), self.n_sites()),
        ] {
            if got != expected {
                return Err(GridError::Dimension { what, expected, got });
            }
        }
        Ok(flows + &self.l_batt * d_batt + &self.l_curt * d_curt_effective + w_flow)
    }
}

/// Build the network model from a scenario. Missing PTDF entries are zero.
pub fn load_network(config: &ScenarioConfig) -> Result<NetworkModel, GridError> {
    let nodes = &config.network.nodes;
    let known = |n: &str| nodes.iter().any(|x| x == n);
    let mut line_names: Vec<String> = Vec::new();
    for l in &config.lines {
        if line_names.contains(&l.name) {
            return Err(GridError::DuplicateLine(l.name.clone()));
        }
        line_names.push(l.name.clone());
    }
    for p in &config.network.ptdf {
        if !known(&p.node) {
            return Err(GridError::UnknownNode(p.node.clone()));
        }
        if !(-1.0..=1.0).contains(&p.value) {
            return Err(GridError::PtdfRange { line: p.line.clone(), node: p.node.clone(), value: p.value });
        }
    }
    if !known(&config.battery.node) {
        return Err(GridError::UnknownNode(config.battery.node.clone()));
    }
    let sites: Vec<String> = config.curtailment.iter().map(|c| c.site.clone()).collect();
    if let Some(s) = sites.iter().find(|s| !known(s)) {
        return Err(GridError::UnknownNode(s.clone()));
    }

    let ptdf = |line: &str, node: &str| config.ptdf(line, node).unwrap_or(0.0);
    let nl = line_names.len();
    let l_batt = DVector::from_fn(nl, |i, _| ptdf(&line_names[i], &config.battery.node));
    let l_curt = DMatrix::from_fn(nl, sites.len(), |i, j| -ptdf(&line_names[i], &sites[j]));
    Ok(NetworkModel {
        line_names,
        curtail_site_names: sites,
        battery_node: config.battery.node.clone(),
        slack_bus: config.network.slack_bus.clone(),
        l_batt,
        l_curt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::isle_jourdain;

    fn net() -> NetworkModel {
        load_network(&isle_jourdain()).unwrap()
    }

    #[test]
    fn reference_network_shape() {
        let n = net();
        assert_eq!((n.n_lines(), n.n_sites()), (2, 2));
        assert_eq!(n.l_curt.row(1).iter().copied().collect::<Vec<_>>(), vec![-0.36, -0.62]);
        assert_eq!(n.l_batt.as_slice(), &[0.36, 0.36]);
    }

    #[test]
    fn battery_discharge_example() {
        let n = net();
        let f = DVector::from_vec(vec![70.0, 70.0]);
        let out = n.flow_update(&f, -10.0, &DVector::zeros(2), &DVector::zeros(2)).unwrap();
        assert!((out[0] - 66.4).abs() < 1e-12 && (out[1] - 66.4).abs() < 1e-12);
    }

    #[test]
    fn bellac_curtailment_example() {
        let n = net();
        let f = DVector::from_vec(vec![70.0, 70.0]);
        let out = n.flow_update(&f, 0.0, &DVector::from_vec(vec![0.0, 10.0]), &DVector::zeros(2)).unwrap();
        assert!((out[1] - f[1] + 6.2).abs() < 1e-12);
    }

    #[test]
    fn zero_deltas_leave_flows() {
        let n = net();
        let f = DVector::from_vec(vec![12.0, -3.0]);
        assert_eq!(n.flow_update(&f, 0.0, &DVector::zeros(2), &DVector::zeros(2)).unwrap(), f);
    }

    #[test]
    fn empty_curtailment_list() {
        let mut s = isle_jourdain();
        s.curtailment.clear();
        let n = load_network(&s).unwrap();
        assert_eq!(n.n_sites(), 0);
        assert_eq!(n.l_curt.ncols(), 0);
    }

    #[test]
    fn duplicate_line_rejected() {
        let mut s = isle_jourdain();
        s.lines[1].name = s.lines[0].name.clone();
        assert!(matches!(load_network(&s), Err(GridError::DuplicateLine(_))));
    }

    #[test]
    fn unknown_node_rejected() {
        let mut s = isle_jourdain();
        s.battery.node = "Nowhere".into();
        assert!(matches!(load_network(&s), Err(GridError::UnknownNode(_))));
    }

    #[test]
    fn wrong_dimension_rejected() {
        let n = net();
        let e = n.flow_update(&DVector::zeros(3), 0.0, &DVector::zeros(2), &DVector::zeros(2));
        assert!(matches!(e, Err(GridError::Dimension { .. })));
    }
}
