use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use clawgui::envpool::{
    BackendError, BackendKind, EnvPool, EnvStatus, Health, PoolConfig, PoolError, RemoteFactory, SimFactory,
    serve_device,
};
use clawgui::suite::Suite;
use clawgui_core::simdevice::{Action, FaultKind, FaultPlan, TaskSpec};
use proptest::prelude::*;

fn suite() -> Suite {
    Suite::builtin()
}

fn pool(cfg: PoolConfig) -> (EnvPool, Arc<SimFactory>) {
    let f = Arc::new(SimFactory::new(Suite::builtin_registry()));
    (EnvPool::new(cfg, f.clone()), f)
}

fn small(pool_size: usize, spare_count: usize) -> PoolConfig {
    PoolConfig { pool_size, spare_count, acquire_timeout_ms: 50, ..PoolConfig::default() }
}

fn crash_always() -> FaultPlan {
    FaultPlan { stall_prob: 0.0, crash_prob: 1.0, rng_seed: 1 }
}

fn task() -> TaskSpec {
    suite().tasks[0].clone()
}

#[test]
fn leases_are_exclusive_and_bounded() {
    let (p, _) = pool(small(2, 1));
    let t = task();
    let (a, _) = p.acquire(&t, "w0").unwrap();
    let (b, _) = p.acquire(&t, "w1").unwrap();
    assert_ne!(a.env_id(), b.env_id());
    let start = Instant::now();
    assert_eq!(p.acquire(&t, "w2").unwrap_err(), PoolError::PoolExhausted(50));
    assert!(start.elapsed() >= Duration::from_millis(50));
    let leased: Vec<_> = p.handles().into_iter().filter(|h| h.status == EnvStatus::Leased).collect();
    assert_eq!(leased.len(), 2);
    assert!(leased.iter().any(|h| h.lease_owner.as_deref() == Some("w0")));
    p.release(a).unwrap();
    let (c, obs) = p.acquire(&t, "w2").unwrap();
    assert_eq!(obs.app_id, t.app_id);
    p.release(b).unwrap();
    p.release(c).unwrap();
    let d = p.doctor();
    assert_eq!((d.idle, d.leased, d.spare_depth), (2, 0, 1));
}

#[test]
fn acquire_waits_for_a_release() {
    let cfg = PoolConfig { acquire_timeout_ms: 5_000, ..small(1, 0) };
    let (p, _) = pool(cfg);
    let p = Arc::new(p);
    let t = task();
    let (lease, _) = p.acquire(&t, "holder").unwrap();
    let waiter = {
        let (p, t) = (p.clone(), t.clone());
        thread::spawn(move || {
            let start = Instant::now();
            let (l, _) = p.acquire(&t, "waiter").unwrap();
            let waited = start.elapsed();
            p.release(l).unwrap();
            waited
        })
    };
    thread::sleep(Duration::from_millis(100));
    p.release(lease).unwrap();
    let waited = waiter.join().unwrap();
    assert!(waited >= Duration::from_millis(80) && waited < Duration::from_secs(5), "{waited:?}");
}

#[test]
fn faulted_env_is_rotated_to_a_spare_reset_to_the_same_task() {
    let cfg = PoolConfig { fault_plan: Some(crash_always()), ..small(1, 2) };
    let (p, f) = pool(cfg);
    let t = task();
    let (mut lease, obs0) = p.acquire(&t, "w").unwrap();
    let first = lease.env_id().to_string();
    assert_eq!(lease.step(&Action::Back), Err(BackendError::Faulted(FaultKind::Crash)));
    assert_eq!(p.health_check(&mut lease), Health::Unhealthy(FaultKind::Crash));
    let (lease, obs1) = p.rotate_spare(lease).unwrap();
    assert_ne!(lease.env_id(), first);
    assert_eq!(lease.task(), &t);
    assert_eq!(obs1, obs0);
    assert_eq!(p.rotations(), 1);
    assert_eq!(f.faults_fired(), 1);
    let d = p.doctor();
    assert_eq!(d.rotation_log.len(), 1);
    assert_eq!(d.rotation_log[0].retired, first);
    assert_eq!(d.rotation_log[0].reason, FaultKind::Crash);
    assert_eq!(d.spare_depth, 1);
    p.release(lease).unwrap();
    // The retired env is replaced by a fresh spare on release.
    let d = p.doctor();
    assert_eq!((d.spare_depth, d.spares_replenished, d.retired), (2, 1, 1));
    assert!(p.handles().iter().any(|h| h.env_id == first && h.status == EnvStatus::Retired));
}

#[test]
fn no_spare_means_spares_exhausted() {
    let cfg = PoolConfig { fault_plan: Some(crash_always()), replenish_spares: false, ..small(1, 0) };
    let (p, _) = pool(cfg);
    let (mut lease, _) = p.acquire(&task(), "w").unwrap();
    assert!(lease.step(&Action::Back).is_err());
    assert_eq!(p.rotate_spare(lease).unwrap_err(), PoolError::SparesExhausted);
}

#[test]
fn healthy_envs_are_not_rotated() {
    let (p, _) = pool(small(1, 1));
    let (lease, _) = p.acquire(&task(), "w").unwrap();
    let id = lease.env_id().to_string();
    assert_eq!(p.rotate_spare(lease).unwrap_err(), PoolError::NotUnhealthy(id));
    // The lease went back to the idle set.
    assert!(p.acquire(&task(), "w").is_ok());
    assert_eq!(p.spare_depth(), 1);
}

#[test]
fn marked_env_is_replaced_on_acquire() {
    let (p, _) = pool(small(1, 1));
    let id = p.handles().into_iter().find(|h| !h.spare).unwrap().env_id;
    assert!(p.mark_unhealthy(&id));
    assert!(!p.mark_unhealthy("env-9999"));
    let (lease, _) = p.acquire(&task(), "w").unwrap();
    assert_ne!(lease.env_id(), id);
    assert_eq!(p.rotations(), 1);
}

#[test]
fn envs_are_recreated_on_schedule_and_on_teardown() {
    let cfg = PoolConfig { teardown_every_episodes: 2, ..small(1, 0) };
    let (p, _) = pool(cfg);
    for _ in 0..5 {
        let (l, _) = p.acquire(&task(), "w").unwrap();
        p.release(l).unwrap();
    }
    assert_eq!(p.doctor().teardowns, 2);
    p.teardown_all();
    assert_eq!(p.acquire(&task(), "w").unwrap_err(), PoolError::PoolNotInitialized);
    assert!(!p.doctor().initialized);
    p.init();
    assert!(p.acquire(&task(), "w").is_ok());
}

/// Drive one episode with random taps, rotating on faults. Returns the
/// number of rotations.
fn episode(p: &EnvPool, t: &TaskSpec, worker: &str, steps: usize) -> Result<u64, PoolError> {
    let (mut lease, _) = p.acquire(t, worker)?;
    let mut rotations = 0;
    let mut n = 0;
    while n < steps {
        match lease.step(&Action::Back) {
            Ok(_) => n += 1,
            Err(BackendError::Faulted(_)) => {
                p.health_check(&mut lease);
                lease = p.rotate_spare(lease)?.0;
                rotations += 1;
                n = 0;
            }
            Err(e) => return Err(e.into()),
        }
    }
    p.release(lease)?;
    Ok(rotations)
}

#[test]
fn concurrent_chaos_rotates_once_per_fault() {
    let plan = FaultPlan { stall_prob: 0.05, crash_prob: 0.05, rng_seed: 11 };
    let cfg = PoolConfig { fault_plan: Some(plan), acquire_timeout_ms: 10_000, ..small(8, 4) };
    let (p, f) = pool(cfg);
    let p = Arc::new(p);
    let t = task();
    let rotations: u64 = (0..6)
        .map(|w| {
            let (p, t) = (p.clone(), t.clone());
            thread::spawn(move || (0..30).map(|_| episode(&p, &t, &format!("w{w}"), 8).unwrap()).sum::<u64>())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap())
        .sum();
    assert!(rotations > 20, "{rotations}");
    assert_eq!(rotations, p.rotations());
    assert_eq!(f.faults_fired(), p.rotations());
    let d = p.doctor();
    assert_eq!(d.spares_promoted, d.initial_spares as u64 + d.spares_replenished - d.spare_depth as u64);
    assert_eq!((d.leased, d.idle), (0, 8));
}

#[test]
fn fault_schedules_follow_the_worker_not_the_env() {
    let plan = FaultPlan { stall_prob: 0.0, crash_prob: 0.2, rng_seed: 5 };
    let run = |pool_size| {
        let cfg = PoolConfig { fault_plan: Some(plan), ..small(pool_size, 50) };
        let (p, f) = pool(cfg);
        let per: Vec<u64> = (0..20).map(|_| episode(&p, &task(), "w", 6).unwrap()).collect();
        (per, f.faults_fired())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn remote_devices_speak_the_same_protocol() {
    let servers: Vec<_> = (0..3).map(|_| serve_device(Suite::builtin_registry()).unwrap()).collect();
    let urls: Vec<String> = servers.iter().map(|s| s.url()).collect();
    let factory = Arc::new(RemoteFactory::new(urls.clone(), Duration::from_secs(5)));
    let cfg = PoolConfig { fault_plan: Some(crash_always()), ..small(2, 1) };
    let p = EnvPool::new(cfg, factory);
    assert!(p.handles().iter().all(|h| matches!(&h.backend, BackendKind::Remote { url } if urls.contains(url))));
    let t = task();
    let (mut lease, obs) = p.acquire(&t, "w").unwrap();
    let (local_pool, _) = pool(small(1, 0));
    let (local, local_obs) = local_pool.acquire(&t, "w").unwrap();
    assert_eq!(obs, local_obs);
    local_pool.release(local).unwrap();
    assert_eq!(lease.step(&Action::Back), Err(BackendError::Faulted(FaultKind::Crash)));
    assert_eq!(p.health_check(&mut lease), Health::Unhealthy(FaultKind::Crash));
    let (lease, obs) = p.rotate_spare(lease).unwrap();
    assert_eq!(obs, local_obs);
    assert_eq!(p.rotations(), 1);
    p.release(lease).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spare_bookkeeping_balances(
        spares in 0usize..4,
        replenish in any::<bool>(),
        ops in prop::collection::vec(0u8..3, 1..20),
    ) {
        let cfg = PoolConfig { fault_plan: Some(crash_always()), replenish_spares: replenish, ..small(2, spares) };
        let (p, _) = pool(cfg);
        let t = task();
        for op in ops {
            let Ok((mut lease, _)) = p.acquire(&t, "w") else { continue };
            match op {
                0 => p.release(lease).unwrap(),
                _ => {
                    let _ = lease.step(&Action::Back);
                    match p.rotate_spare(lease) {
                        Ok((l, _)) => p.release(l).unwrap(),
                        Err(e) => prop_assert_eq!(e, PoolError::SparesExhausted),
                    }
                }
            }
            let d = p.doctor();
            prop_assert_eq!(d.spares_promoted, d.initial_spares as u64 + d.spares_replenished - d.spare_depth as u64);
            prop_assert_eq!(d.rotations, d.spares_promoted);
            if !replenish {
                prop_assert_eq!(d.spares_replenished, 0);
            }
        }
    }
}
