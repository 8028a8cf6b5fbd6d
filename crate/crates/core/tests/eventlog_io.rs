use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use xnap::eventlog::{parse_log, write_log, Event, EventLog, LogFormat, Trace};

fn arb_log() -> impl Strategy<Value = EventLog> {
    let trace = (
        "[a-z0-9_]{1,8}",
        proptest::collection::vec(
            (
                "[A-Za-z]([A-Za-z ,\"]{0,8}[A-Za-z])?",
                0i64..4_000_000_000_000,
            ),
            1..6,
        ),
    );
    proptest::collection::btree_map("[a-z0-9_]{1,8}", trace, 1..6).prop_map(|cases| {
        let traces = cases
            .into_iter()
            .map(|(case, (_, events))| {
                let events = events
                    .into_iter()
                    .map(|(activity, ms)| Event {
                        case_id: case.clone(),
                        activity,
                        timestamp: Utc.timestamp_millis_opt(ms).unwrap(),
                    })
                    .collect();
                Trace::new(case.clone(), events).unwrap()
            })
            .collect();
        EventLog::new(traces).unwrap()
    })
}

proptest! {
    #[test]
    fn write_then_parse_is_identity(log in arb_log(), semicolon in any::<bool>()) {
        let format = LogFormat { delimiter: if semicolon { b';' } else { b',' }, ..LogFormat::default() };
        let mut buf = Vec::new();
        write_log(&log, &mut buf, &format).unwrap();
        let back = parse_log(buf.as_slice(), &format).unwrap();
        prop_assert_eq!(back.len(), log.len());
        for t in log.traces() {
            let other = back.traces().iter().find(|o| o.case_id() == t.case_id()).unwrap();
            prop_assert_eq!(other.events(), t.events());
        }
    }
}

#[test]
fn custom_columns_and_time_format() {
    let text = "id;step;when;extra\n7;Close;16.03.2021 10:00:00;x\n7;Open;15.03.2021 09:30:00;y\n";
    let format = LogFormat {
        case_col: "id".into(),
        activity_col: "step".into(),
        time_col: "when".into(),
        time_format: Some("%d.%m.%Y %H:%M:%S".into()),
        delimiter: b';',
    };
    let log = parse_log(text.as_bytes(), &format).unwrap();
    let acts: Vec<&str> = log.traces()[0].activities().collect();
    assert_eq!(acts, ["Open", "Close"]);
}
