mod common;

use interlace_core::green::{green_estimate, EstimateParams};
use interlace_core::lattice::Point;
use interlace_core::rng::StreamId;

#[test]
fn green_function_is_symmetric() {
    let mut rng = StreamId::new(11, 0).rng();
    for i in 0..10 {
        let x = common::random_point(&mut rng, 5, 4);
        let y = common::random_point(&mut rng, 5, 4);
        let params = EstimateParams::new(4000).center(Point::origin(5)).truncation(24);
        let a = green_estimate(&x, &y, &params, &mut StreamId::new(12, 2 * i).rng()).unwrap();
        let b = green_estimate(&y, &x, &params, &mut StreamId::new(12, 2 * i + 1).rng()).unwrap();
        let sigma = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.value - b.value).abs() <= 3.0 * sigma, "pair {i}: {} vs {} (sigma {sigma})", a.value, b.value);
    }
}
