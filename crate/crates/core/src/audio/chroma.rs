/// Pitch class of a frequency, 0 = A, in semitones modulo 12.
pub fn pitch_class(freq_hz: f64) -> usize {
    let semis = (12.0 * (freq_hz / 440.0).log2()).round() as i64;
    semis.rem_euclid(12) as usize
}

/// 12-bin chroma vector (normalized to sum 1) and its population standard
/// deviation. Bin 0 (DC) carries no pitch and is skipped; a silent spectrum
/// gives the uniform vector.
pub fn chroma(spectrum: &[f64], sample_rate: u32) -> ([f64; 12], f64) {
    let frame_len = 2 * spectrum.len();
    let mut classes = [0.0f64; 12];
    for (k, &x) in spectrum.iter().enumerate().skip(1) {
        let f = k as f64 * sample_rate as f64 / frame_len as f64;
        classes[pitch_class(f)] += x * x;
    }
    let total: f64 = classes.iter().sum();
    if total > 0.0 {
        classes.iter_mut().for_each(|c| *c /= total);
    } else {
        classes = [1.0 / 12.0; 12];
    }
    let mean = classes.iter().sum::<f64>() / 12.0;
    let var = classes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 12.0;
    (classes, var.sqrt())
}
