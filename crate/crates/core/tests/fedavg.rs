mod common;

use fgl_core::fedavg::{federated_round, train_federation, ClientState, FederationConfig};
use fgl_core::gnn::{self, AdamState, Arch, GraphData, ModelParams};
use fgl_core::graph::NodeId;
use fgl_core::seed;
use fgl_core::synthetic::{self, SyntheticSpec};

fn client(id: usize, arch: Arch, relation: usize) -> (ClientState, ModelParams) {
    let spec = SyntheticSpec {
        nodes: 120,
        ..SyntheticSpec::default()
    };
    let d = synthetic::generate(&spec, 5).unwrap();
    let order: Vec<NodeId> = (0..120).collect();
    let data = GraphData::new(&d.relations[relation], &order, d.nodes.features().clone());
    let init = ModelParams::init(arch, spec.feature_dim, 16, 2);
    let c = ClientState::new(
        id,
        data,
        d.nodes.labels().to_vec(),
        (0..120).filter(|r| r % 3 != 0).collect(),
        (0..120).filter(|r| r % 3 == 0).collect(),
        &init,
    )
    .unwrap();
    (c, init)
}

const CFG: FederationConfig = FederationConfig {
    rounds: 4,
    local_steps: 2,
    fanout: 5,
};

#[test]
fn single_client_round_is_its_local_result() {
    for arch in [Arch::Gcn, Arch::Sage] {
        let (c, init) = client(0, arch, 0);
        let mut fed = vec![c.clone()];
        let (global, _) = federated_round(&mut fed, &init, &CFG, 9).unwrap();
        let mut alone = c;
        alone
            .local_train(
                &init,
                CFG.local_steps,
                CFG.fanout,
                seed::derive_indexed(9, "client", 0),
            )
            .unwrap();
        assert_eq!(global, alone.params, "{arch}");
    }
}

#[test]
fn identical_clients_round_equals_one_client() {
    for arch in [Arch::Gcn, Arch::Sage] {
        let (c, init) = client(3, arch, 1);
        let mut fed = vec![c.clone(), c.clone(), c.clone(), c.clone()];
        let (global, losses) = federated_round(&mut fed, &init, &CFG, 4).unwrap();
        let mut one = vec![c];
        let (single, loss) = federated_round(&mut one, &init, &CFG, 4).unwrap();
        assert_eq!(global, single, "{arch}");
        assert!(losses.iter().all(|&l| l == loss[0]));
    }
}

#[test]
fn single_client_federation_is_centralized_training() {
    let (c, init) = client(0, Arch::Gcn, 2);
    let cfg = FederationConfig {
        rounds: 6,
        local_steps: 1,
        fanout: 5,
    };
    let mut fed = vec![c.clone()];
    let mut global = init.clone();
    for round in 1..=cfg.rounds {
        global = federated_round(&mut fed, &global, &cfg, round as u64)
            .unwrap()
            .0;
    }
    let mut params = init.clone();
    let mut adam = AdamState::new(&init);
    for _ in 0..cfg.rounds {
        let (logits, cache) = gnn::forward(&params, &c.data, 5, 0).unwrap();
        let (_, grads) =
            gnn::loss_and_grads(&params, &c.data, &logits, &cache, &c.labels, &c.train_rows)
                .unwrap();
        gnn::adam_step(&mut params, &grads, &mut adam).unwrap();
    }
    assert_eq!(global, params);
}

#[test]
fn zero_local_steps_keep_global() {
    let (c, init) = client(0, Arch::Sage, 0);
    let cfg = FederationConfig {
        local_steps: 0,
        ..CFG
    };
    let (global, _) = federated_round(&mut [c.clone(), c], &init, &cfg, 1).unwrap();
    assert_eq!(global, init);
}

#[test]
fn history_shape_and_determinism() {
    let run = || {
        let (a, init) = client(0, Arch::Sage, 0);
        let (b, _) = client(1, Arch::Sage, 1);
        train_federation(&mut [a, b], &init, &CFG, "x", 11).unwrap()
    };
    let h = run();
    assert_eq!(h.len(), CFG.rounds);
    assert_eq!(
        h.rounds.iter().map(|r| r.0).collect::<Vec<_>>(),
        vec![1, 2, 3, 4]
    );
    assert_eq!(h.to_csv(), run().to_csv());
}
