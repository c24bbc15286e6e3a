//! Synthetic calibration data and its CSV form.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::likelihood::{ChoiceData, ChoiceObs};
use crate::behavior::{inverse_cdf, BehaviorSpec, ChoiceContext, N_SHOCKS};
use crate::environment::{draw_features, EnvConfig};
use crate::error::{Error, Result};
use crate::rng::{self, STREAM_DATA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcmDataset {
    pub booking: ChoiceData,
    pub shock: ChoiceData,
}

/// `n_booking` customer decisions at uniformly random price levels; every
/// booking contributes one shock observation.
pub fn generate_dataset(spec: &BehaviorSpec, config: &EnvConfig, n_booking: usize, seed: u64) -> Result<DcmDataset> {
    config.validate()?;
    spec.validate()?;
    let d = config.feature_dim;
    let mut rng = rng::stream(seed, STREAM_DATA);
    let mut booking = ChoiceData::new(config.n_room_types + 1, d);
    let mut shock = ChoiceData::new(N_SHOCKS, d);
    for _ in 0..n_booking {
        let action = rng.gen_range(0..config.n_actions());
        let epoch = rng.gen_range(0..config.episode_length);
        let x = draw_features(d, &mut rng);
        let room_prices = config.room_prices(action);
        let ctx =
            ChoiceContext { demand_scale: config.demand_scale, competition_scale: config.competition_scale, epoch };
        let probs = spec.choice_probabilities(&x, &room_prices, &ctx)?;
        let chosen = inverse_cdf(&probs, rng.gen());
        if chosen > 0 {
            let price = room_prices[chosen - 1];
            let sp = spec.shock_probabilities(&x, price, epoch)?;
            let z = inverse_cdf(&sp, rng.gen());
            shock.push(ChoiceObs { features: x.clone(), prices: vec![price; N_SHOCKS], chosen: z })?;
        }
        let mut prices = vec![0.0];
        prices.extend(room_prices);
        booking.push(ChoiceObs { features: x, prices, chosen })?;
    }
    Ok(DcmDataset { booking, shock })
}

pub fn write_dataset_csv(path: &Path, data: &DcmDataset) -> Result<()> {
    if data.booking.dim != data.shock.dim {
        return Err(Error::Dimension("blocks differ in feature dimension".into()));
    }
    let n_prices = data.booking.n_alt.max(data.shock.n_alt);
    let d = data.booking.dim;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["obs_type".to_string(), "chosen_index".to_string()];
    header.extend((0..n_prices).map(|i| format!("price_{i}")));
    header.extend((0..d).map(|i| format!("feat_{i}")));
    w.write_record(&header)?;
    for (kind, block) in [("booking", &data.booking), ("shock", &data.shock)] {
        for o in &block.obs {
            let mut rec = vec![kind.to_string(), o.chosen.to_string()];
            rec.extend((0..n_prices).map(|i| o.prices.get(i).map_or(String::new(), |p| format!("{p}"))));
            rec.extend(o.features.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path, n_rooms: usize) -> Result<DcmDataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let n_prices = header.iter().filter(|h| h.starts_with("price_")).count();
    let d = header.iter().filter(|h| h.starts_with("feat_")).count();
    if n_prices < n_rooms + 1 {
        return Err(Error::Dimension(format!("{n_prices} price columns for {n_rooms} room types")));
    }
    let mut booking = ChoiceData::new(n_rooms + 1, d);
    let mut shock = ChoiceData::new(N_SHOCKS, d);
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let chosen: usize = rec[1].parse().map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
        let features = (0..d).map(|i| num(&rec[2 + n_prices + i])).collect::<Result<Vec<_>>>()?;
        let (block, k) = match &rec[0] {
            "booking" => (&mut booking, n_rooms + 1),
            "shock" => (&mut shock, N_SHOCKS),
            other => return Err(Error::Parse(format!("row {}: unknown obs_type {other:?}", line + 2))),
        };
        let prices = (0..k).map(|i| num(&rec[2 + i])).collect::<Result<Vec<_>>>()?;
        block.push(ChoiceObs { features, prices, chosen })?;
    }
    Ok(DcmDataset { booking, shock })
}
