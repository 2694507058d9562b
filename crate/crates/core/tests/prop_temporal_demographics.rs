use hashscope_core::corpus::Post;
use hashscope_core::demographics::{
    aggregate_user, age_stderr, cohort_report, primary_face, AgeBracket, FaceFixtureLine, FaceObservation, FaceRect,
    FixtureFace, Gender, StubFaceProvider,
};
use hashscope_core::temporal::{detect_peaks, histogram, total_variation, TimeHistogram, TimeMode};
use hashscope_core::Lexicon;
use proptest::prelude::*;

const DAY: i64 = 86_400;

fn stamps() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(0i64..4_000_000_000, 0..200)
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        if s == 0.0 {
            vec![1.0 / w.len() as f64; w.len()]
        } else {
            w.iter().map(|x| x / s).collect()
        }
    })
}

fn post(id: usize, user: &str, ts: i64) -> Post {
    Post {
        media_id: format!("m{id:04}"),
        user_id: user.into(),
        username: user.into(),
        created_at: ts,
        hashtags: vec!["kush".into(), "lean".into()],
        caption: String::new(),
        geo: None,
        media_ref: Some(format!("img/{id}.jpg")),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn day_shift_keeps_hours_and_rotates_weekdays(ts in stamps()) {
        let h0 = TimeHistogram::from_timestamps(TimeMode::Hour, ts.iter().copied());
        let h1 = TimeHistogram::from_timestamps(TimeMode::Hour, ts.iter().map(|t| t + DAY));
        prop_assert_eq!(&h0.bins, &h1.bins);
        let w0 = TimeHistogram::from_timestamps(TimeMode::Weekday, ts.iter().copied());
        let w1 = TimeHistogram::from_timestamps(TimeMode::Weekday, ts.iter().map(|t| t + DAY));
        for d in 0..7 {
            prop_assert_eq!(w1.bins[(d + 1) % 7], w0.bins[d]);
        }
        prop_assert_eq!(h0.total, ts.len() as u64);
        prop_assert_eq!(h0.bins.iter().sum::<u64>(), h0.total);
    }

    #[test]
    fn histogram_total_counts_filtered_posts(ts in stamps()) {
        let posts: Vec<Post> = ts.iter().enumerate().map(|(i, &t)| post(i, "u", t)).collect();
        let refs: Vec<&Post> = posts.iter().collect();
        let lex = Lexicon::shipped();
        let all = histogram(&refs, TimeMode::Hour, None, &lex);
        prop_assert_eq!(all.total, posts.len() as u64);
        // kush and lean put every post in both of their classes and none in pills
        let weed = histogram(&refs, TimeMode::Hour, Some(hashscope_core::DrugClass::Weed), &lex);
        let pills = histogram(&refs, TimeMode::Hour, Some(hashscope_core::DrugClass::Pills), &lex);
        prop_assert_eq!(weed.bins, all.bins);
        prop_assert_eq!(pills.total, 0);
    }

    #[test]
    fn peaks_ignore_uniform_scaling(bins in prop::collection::vec(0u64..50, 24), k in 1u64..6, prom in 0.0f64..0.1) {
        let h = |b: Vec<u64>| TimeHistogram { mode: TimeMode::Hour, total: b.iter().sum(), bins: b, class_filter: None };
        let base = h(bins.clone());
        let scaled = h(bins.iter().map(|x| x * k).collect());
        prop_assert_eq!(detect_peaks(&base, prom), detect_peaks(&scaled, prom));
        // rotating the circle rotates the peaks
        let mut rotated = bins.clone();
        rotated.rotate_right(5);
        let mut expect: Vec<usize> = detect_peaks(&base, prom).iter().map(|p| (p + 5) % 24).collect();
        let mut got = detect_peaks(&h(rotated), prom);
        expect.sort();
        got.sort();
        // flat runs wrapping past bin 0 may be reported at a different first bin
        if bins.windows(2).all(|w| w[0] != w[1]) && bins[0] != bins[23] {
            prop_assert_eq!(got, expect);
        }
    }

    #[test]
    fn total_variation_is_a_metric(p in distribution(24), q in distribution(24), r in distribution(24)) {
        let pq = total_variation(&p, &q);
        prop_assert!((pq - total_variation(&q, &p)).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert!(total_variation(&p, &p) == 0.0);
        prop_assert!(pq <= total_variation(&p, &r) + total_variation(&r, &q) + 1e-12);
    }

    #[test]
    fn primary_face_ignores_rescaling(rects in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0, 1.0f64..50.0, 1.0f64..50.0), 1..6), s in 0.1f64..10.0) {
        let obs = |scale: f64| -> Vec<FaceObservation> {
            rects.iter().enumerate().map(|(i, &(x, y, w, h))| FaceObservation {
                media_id: "m".into(),
                face_rect: FaceRect::new(x * scale, y * scale, w * scale, h * scale),
                age_estimate: i as f64,
                gender: Gender::Male,
                provider_sigma: 5.0,
            }).collect()
        };
        let a = primary_face(&obs(1.0)).unwrap().age_estimate;
        let b = primary_face(&obs(s)).unwrap().age_estimate;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn aggregate_is_order_free_and_mean_faces_tighten(ages in prop::collection::vec(10.0f64..60.0, 1..12), seed in any::<u64>()) {
        let lines: Vec<FaceFixtureLine> = ages.iter().enumerate().map(|(i, &a)| FaceFixtureLine {
            media_ref: format!("img/{i}.jpg"),
            faces: vec![FixtureFace { rect: FaceRect::new(0.0, 0.0, 10.0, 10.0), age: a, gender: if i % 2 == 0 { Gender::Female } else { Gender::Male } }],
        }).collect();
        let provider = StubFaceProvider::new(lines.clone(), 5.0);
        let posts: Vec<Post> = (0..ages.len()).map(|i| post(i, "u", i as i64)).collect();
        let mut refs: Vec<&Post> = posts.iter().collect();
        let a = aggregate_user("u", &refs, &provider).unwrap();
        let n = refs.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            refs.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(&aggregate_user("u", &refs, &provider).unwrap(), &a);
        prop_assert!((a.age_stderr - 5.0 / (n as f64).sqrt()).abs() < 1e-12);
        prop_assert_eq!(a.bracket, AgeBracket::of(a.mean_age));

        // one more face at exactly the mean
        let mut more = lines;
        more.push(FaceFixtureLine {
            media_ref: format!("img/{n}.jpg"),
            faces: vec![FixtureFace { rect: FaceRect::new(0.0, 0.0, 10.0, 10.0), age: a.mean_age, gender: Gender::Female }],
        });
        let extended: Vec<Post> = (0..=n).map(|i| post(i, "u", i as i64)).collect();
        let erefs: Vec<&Post> = extended.iter().collect();
        let b = aggregate_user("u", &erefs, &StubFaceProvider::new(more, 5.0)).unwrap();
        prop_assert!((b.mean_age - a.mean_age).abs() < 1e-9);
        prop_assert!(b.age_stderr < a.age_stderr);
        prop_assert_eq!(b.age_stderr, age_stderr(5.0, n + 1));
    }

    #[test]
    fn stacked_hours_sum_to_unstacked(ages in prop::collection::vec(10.0f64..60.0, 1..6), ts in prop::collection::vec(0i64..2_000_000_000, 1..60)) {
        let users: Vec<String> = (0..ages.len()).map(|i| format!("u{i}")).collect();
        let posts: Vec<Post> = ts.iter().enumerate().map(|(i, &t)| post(i, &users[i % users.len()], t)).collect();
        let refs: Vec<&Post> = posts.iter().collect();
        let demo: Vec<_> = users.iter().zip(&ages).enumerate().map(|(i, (u, &age))| {
            let line = FaceFixtureLine { media_ref: format!("img/{i}.jpg"), faces: vec![FixtureFace { rect: FaceRect::new(0.0, 0.0, 1.0, 1.0), age, gender: Gender::Male }] };
            let p = post(i, u, 0);
            aggregate_user(u, &[&p], &StubFaceProvider::new([line], 5.0)).unwrap()
        }).collect();
        let report = cohort_report(&demo, &refs, 0);
        let unstacked = TimeHistogram::from_timestamps(TimeMode::Hour, ts.iter().copied());
        let mut sum = vec![0u64; 24];
        for v in report.stacked_hourly.values() {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        prop_assert_eq!(sum, unstacked.bins);
        prop_assert_eq!(report.bracket_counts.values().sum::<u64>(), demo.len() as u64);
    }
}
