use meshpon_core::ran::AppPacket;
use meshpon_core::scenario::ScenarioConfig;
use meshpon_core::sim::{Injection, Simulation, TrafficMode};
use meshpon_core::{SimTime, TrafficClass};

const GOLDEN: &str = include_str!("golden/single_packet.txt");

fn lone_packet(class: TrafficClass, size_bytes: u32) -> AppPacket {
    let cfg = ScenarioConfig { duration_s: 0.01, trace: true, ..Default::default() };
    let inj = Injection { ru: 0, class, t_created: SimTime::from_us(200), size_bytes };
    let out = Simulation::new(&cfg, TrafficMode::Scripted(vec![inj]), 1).unwrap().run();
    assert_eq!(out.checks.delivered, 1);
    out.trace.into_iter().next().unwrap()
}

fn render(p: &AppPacket) -> Vec<String> {
    let named = [
        ("t_created", Some(p.t_created)),
        ("t_bsr", p.t_bsr),
        ("t_radio_tx_start", p.t_radio_tx_start),
        ("t_at_onu", p.t_at_onu),
        ("t_onu_depart", p.t_onu_depart),
        ("t_at_du", p.t_at_du),
        ("t_ready", p.t_ready),
        ("t_dl_depart", p.t_dl_depart),
        ("t_at_app", p.t_at_app),
    ];
    named
        .into_iter()
        .filter_map(|(n, t)| {
            // Exact to the picosecond: six decimals of a microsecond.
            t.map(|t| format!("{} {n} {}.{:06}", p.class, t.0 / 1_000_000, t.0 % 1_000_000))
        })
        .collect()
}

#[test]
fn single_packets_match_hand_computed_timeline() {
    let expected: Vec<&str> = GOLDEN.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect();
    let mut got = render(&lone_packet(TrafficClass::Urllc, 100));
    got.extend(render(&lone_packet(TrafficClass::Normal, 1500)));
    assert_eq!(got, expected);
}

#[test]
fn quarter_ms_slot_shortens_every_slot_bound_stage() {
    let mut cfg = ScenarioConfig { duration_s: 0.01, trace: true, ..Default::default() };
    cfg.radio.set_slot_us(250.0);
    let inj = Injection { ru: 0, class: TrafficClass::Urllc, t_created: SimTime::from_us(200), size_bytes: 100 };
    let p = Simulation::new(&cfg, TrafficMode::Scripted(vec![inj]), 1).unwrap().run().trace.remove(0);
    // 2 PRBs x 7 symbols: same 1512 B of IQ as the 0.5 ms case.
    assert_eq!(p.fh_bytes, 1512);
    assert_eq!(p.t_radio_tx_start, Some(SimTime::from_us(250)));
    assert_eq!(p.t_at_onu, Some(SimTime::from_us(500)));
    // guard + (header + IQ + grant overhead) at 10 Gb/s
    assert_eq!(p.t_onu_depart, Some(SimTime::from_ps(502_289_600)));
    assert_eq!(p.t_ready, Some(SimTime::from_ps(802_289_600)));
    assert_eq!(p.t_dl_depart, Some(SimTime::from_us(875)));
    assert_eq!(p.t_at_app, Some(SimTime::from_ps(925_080_000)));
}
