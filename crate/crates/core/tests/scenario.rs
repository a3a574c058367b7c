mod common;

use noir_core::dynamics::RoutingError;
use noir_core::export::{trajectory_header, write_diagnostics, write_trajectory, write_zeta_table};
use noir_core::scenario::{parse_graph_only, parse_scenario, ScenarioError, ScenarioFile, ValidationError};
use noir_core::sweep::{run_sweep, SweepOptions, ZetaRow};
use proptest::prelude::*;

use common::*;

fn junction_text() -> String {
    std::fs::read_to_string(fixture_path("junction.scenario")).unwrap()
}

#[test]
fn junction_fixture_shape() {
    let s = fixture("junction.scenario");
    assert_eq!((s.graph.len(), s.graph.n_inlets(), s.graph.n_outlets(), s.graph.n_interior()), (20, 4, 3, 13));
    let expected = [0.67, 0.76, 0.71, 0.59, 0.67, 0.94, 0.94, 0.83, 0.69, 0.58, 0.97, 0.96, 0.91];
    assert_eq!(s.routing.p(), expected);
    assert_eq!(s.cost.u0(), 20.0);
    assert_eq!((s.cost.grid().steps(), s.options.iterations), (2000, 15));
    assert_eq!(s.zetas, vec![0.5, 1.0, 2.0, 4.0]);
}

#[test]
fn out_of_range_probability_names_the_road() {
    let text = junction_text().replace("{ road = 9, value = 0.76 }", "{ road = 9, value = 1.5 }");
    match parse_scenario(&text).unwrap_err() {
        ScenarioError::Validation {
            source: ValidationError::Routing(RoutingError::ProbabilityOutOfRange { node: 9, value }),
            ..
        } => assert_eq!(value, 1.5),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_key_is_a_parse_error_naming_it() {
    let text = junction_text().replace("[initial]", "[initial]\nlanes = 2");
    let err = parse_scenario(&text).unwrap_err();
    let ScenarioError::Parse(msg) = &err else { panic!("{err:?}") };
    assert!(msg.contains("lanes"), "{msg}");
    assert!(msg.contains("line"), "{msg}");
}

#[test]
fn generated_scenarios_are_reproducible() {
    let g = parse_graph_only(&junction_text()).unwrap();
    let a = ScenarioFile::generated(&g, 11).unwrap().to_toml();
    assert_eq!(a, ScenarioFile::generated(&g, 11).unwrap().to_toml());
    assert_ne!(a, ScenarioFile::generated(&g, 12).unwrap().to_toml());
    let s = parse_scenario(&a).unwrap();
    assert!(s.diagram.outflow_violations(&s.graph, &s.routing).is_empty());
}

#[test]
fn trajectory_csv_layout_and_round_trip() {
    let s = fixture("junction.scenario");
    let state = run_sweep(&s.graph, &s.routing, &s.cost, &s.x0, &SweepOptions { iterations: 2, ..s.options }).unwrap();
    for lambda in [false, true] {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &s.graph, &s.routing, &state, lambda).unwrap();
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, trajectory_header(&s.graph, lambda));
        assert_eq!(header.len(), 1 + 4 + 13 + 1 + if lambda { 13 } else { 0 });
        assert_eq!(header[..6], ["t", "u_1", "u_2", "u_3", "u_4", "x_8"]);
        let rows: Vec<Vec<f64>> =
            reader.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 2001);
        let z = state.net_outlet_outflow(&s.routing);
        for (k, row) in rows.iter().enumerate() {
            assert_eq!(row[0], state.grid.time(k));
            assert_eq!(row[1..5], *state.u[k].as_slice());
            assert_eq!(row[5..18], *state.x[k].as_slice());
            assert_eq!(row[18], z[k]);
            if lambda {
                assert_eq!(row[19..], *state.lambda[k].as_slice());
            }
        }
    }
}

#[test]
fn diagnostics_and_zeta_tables() {
    let s = fixture("junction.scenario");
    let state = run_sweep(&s.graph, &s.routing, &s.cost, &s.x0, &SweepOptions { iterations: 1, ..s.options }).unwrap();
    let mut buf = Vec::new();
    write_diagnostics(&mut buf, &state.iterations).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,delta_u,cost,terminal_residual,boundary_active");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,inf,"));

    let mut buf = Vec::new();
    write_zeta_table(&mut buf, &[ZetaRow { zeta: 0.0, max_abs_lambda0: 0.0 }]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "zeta,max_abs_lambda0\n0,0\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_scenarios_round_trip(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let g = random_network(&mut rng, 20);
        let file = ScenarioFile::generated(&g, seed).unwrap();
        let s = parse_scenario(&file.to_toml()).unwrap();
        prop_assert_eq!(s.file(), &file);
        let again = parse_scenario(&s.to_toml()).unwrap();
        prop_assert_eq!(again, s);
    }

    #[test]
    fn header_depends_only_on_counts(seed in any::<u64>(), lambda in any::<bool>()) {
        let mut rng = rng(seed);
        let g = random_network(&mut rng, 20);
        let h = trajectory_header(&g, lambda);
        let per_interior = if lambda { 2 } else { 1 };
        prop_assert_eq!(h.len(), 2 + g.n_inlets() + per_interior * g.n_interior());
    }
}
