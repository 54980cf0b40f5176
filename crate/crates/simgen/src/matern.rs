use spatiofd::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Modified Bessel function of the second kind, order one, for `x > 0`.
pub fn bessel_k1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 2.0 {
        k1_series(x)
    } else {
        k1_integral(x)
    }
}

// K1(x) = 1/x + ln(x/2) I1(x) - (x/4) sum_k [psi(k+1) + psi(k+2)] (x^2/4)^k / (k! (k+1)!)
fn k1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut i1 = 0.0;
    let mut digamma_sum = 0.0;
    let mut psi_k1 = -EULER_GAMMA;
    let mut k = 0usize;
    loop {
        let psi_k2 = psi_k1 + 1.0 / (k + 1) as f64;
        i1 += term;
        digamma_sum += (psi_k1 + psi_k2) * term;
        k += 1;
        term *= q / (k * (k + 1)) as f64;
        psi_k1 = psi_k2;
        if term < 1e-18 * i1 {
            break;
        }
    }
    1.0 / x + (0.5 * x).ln() * 0.5 * x * i1 - 0.25 * x * digamma_sum
}

// K1(x) = int_0^inf exp(-x cosh t) cosh t dt; the integrand is analytic and
// doubly exponentially decaying, so the trapezoid rule converges geometrically.
fn k1_integral(x: f64) -> f64 {
    let h = 0.05;
    let f = |t: f64| (-x * t.cosh()).exp() * t.cosh();
    let mut sum = 0.5 * f(0.0);
    let mut k = 1;
    loop {
        let v = f(k as f64 * h);
        sum += v;
        if v < 1e-18 * sum {
            break;
        }
        k += 1;
    }
    h * sum
}

/// Matérn correlation at distance `d` with smoothness `nu` in {0.5, 1, 1.5}
/// and range `phi`. A zero range means no correlation beyond lag zero.
pub fn matern(d: f64, nu: f64, phi: f64) -> Result<f64> {
    if !(d >= 0.0) || !(phi >= 0.0) {
        return Err(Error::Parameter(format!(
            "Matérn distance and range must be non-negative, got d = {d}, phi = {phi}"
        )));
    }
    let shape = if nu == 0.5 {
        0
    } else if nu == 1.0 {
        1
    } else if nu == 1.5 {
        2
    } else {
        return Err(Error::Parameter(format!(
            "Matérn smoothness {nu} unsupported (use 0.5, 1 or 1.5)"
        )));
    };
    if d == 0.0 {
        return Ok(1.0);
    }
    if phi == 0.0 {
        return Ok(0.0);
    }
    let x = d / phi;
    Ok(match shape {
        0 => (-x).exp(),
        1 => x * bessel_k1(x),
        _ => (1.0 + x) * (-x).exp(),
    })
}
