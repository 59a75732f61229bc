use svlab_core::scenario::{run_scenario, Experiment, Scenario, BUILTINS};
use svlab_core::{Error, Tolerances};

const EXAMPLE: &str = r#"
name = "saddle"
polynomial = "x4 - x1*x2 + 0.1*x3^2"
deltas = [0.125, 0.0625, 0.03125]
experiments = ["directions", "decompose", "kakeya", "hairbrush", "enumerate"]
seed = 7

[params]
s = 0.15
u = 0.1
kappa = 0.5
c = 1.0

[experiment_deltas]
decompose = [0.0625, 0.03125]
"#;

#[test]
fn documented_example_loads() {
    let s = Scenario::from_toml(EXAMPLE, None).unwrap();
    assert_eq!(s.name, "saddle");
    assert_eq!(s.deltas_for(Experiment::Decompose), vec![0.0625, 0.03125]);
    assert_eq!(s.deltas_for(Experiment::Kakeya), s.deltas);
    let p = s.polynomial_at(0.0625).unwrap();
    assert_eq!(p.coeff([1, 1, 0, 0]), -1.0);
    assert_eq!(p.coeff([0, 0, 2, 0]), 0.1);
}

#[test]
fn builtin_reference_and_unknown_keys() {
    let s = Scenario::from_toml("name = \"b\"\nbuiltin = \"paraboloid\"\ndeltas = [0.125]\nexperiments = []\n", None).unwrap();
    assert_eq!(s.polynomial_at(0.125).unwrap(), Scenario::builtin("paraboloid").unwrap().polynomial_at(0.125).unwrap());
    let bad = "name = \"b\"\npolynomial = \"x4\"\ndeltas = [0.125]\nexperiments = []\ncolour = 3\n";
    assert!(matches!(Scenario::from_toml(bad, None), Err(Error::Config { line: 5, .. })));
}

#[test]
fn every_builtin_loads_by_name() {
    for name in BUILTINS {
        let s = Scenario::load(name).unwrap();
        s.validate().unwrap();
        for &d in &s.deltas {
            assert!(s.polynomial_at(d).unwrap().degree() <= 3);
        }
    }
    assert!(Scenario::load("no-such-builtin").is_err());
}

#[test]
fn hyperplane_lines_are_all_flat() {
    let mut s = Scenario::builtin("hyperplane").unwrap();
    s.experiments = vec![Experiment::Directions];
    let mut s = s.with_deltas(vec![0.125, 0.0625]).unwrap();
    s.experiments.push(Experiment::Decompose);
    s.experiment_deltas.insert("decompose".into(), vec![0.0625]);
    let r = run_scenario(&s, &Tolerances::default()).unwrap();
    let d = r.results[1].decompose.as_ref().unwrap();
    assert!(d.n_lines > 0);
    assert_eq!(d.class_counts[2], d.n_lines);
    assert!(d.partition_total && d.cover_sound);
    assert!(r.results[0].decompose.is_none());
}
