use crate::error::{Error, Result};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Overrides applied on top of the defaults.
    pub overrides: &'static str,
}

macro_rules! joint {
    ($extra:literal) => {
        concat!(
            "[protocol]\nduty_joint = 1.0\nduty_local = 0.0\nrounds = 5000000\n",
            $extra
        )
    };
}

macro_rules! local4 {
    ($extra:literal) => {
        concat!(
            "[grid]\ndt_ns = 0.08\n",
            "[source]\nmode = \"filtered_gaussian\"\nlocal_tb_rate = 0.01\n",
            $extra
        )
    };
}

macro_rules! local5 {
    ($extra:literal) => {
        concat!(
            "[grid]\ndt_ns = 0.08\n",
            "[source]\nmode = \"uniform_bins\"\nlocal_tb_rate = 0.05\nref_bandwidth_ghz = \"inf\"\n",
            "[attack]\nkind = \"blinding\"\n",
            $extra
        )
    };
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig2g",
        description: "joint TGI, no attack, 3 dB, N = 5e6",
        overrides: joint!("[channel]\nloss_db = 3.0\n"),
    },
    Preset {
        name: "fig2h",
        description: "joint TGI, no attack, 7 dB, N = 5e6",
        overrides: joint!("[channel]\nloss_db = 7.0\n"),
    },
    Preset {
        name: "fig3a",
        description: "joint TGI, time shift +1.0 ns, 3 dB",
        overrides: joint!("[attack]\nkind = \"time_shift\"\ndelays_ns = [1.0]\nprobabilities = [1.0]\n"),
    },
    Preset {
        name: "fig3b",
        description: "joint TGI, time shift +0.3 ns, 3 dB",
        overrides: joint!("[attack]\nkind = \"time_shift\"\ndelays_ns = [0.3]\nprobabilities = [1.0]\n"),
    },
    Preset {
        name: "fig3c",
        description: "joint TGI, time shift -0.3 ns, 3 dB",
        overrides: joint!("[attack]\nkind = \"time_shift\"\ndelays_ns = [-0.3]\nprobabilities = [1.0]\n"),
    },
    Preset {
        name: "fig3d",
        description: "joint TGI, time shift -1.0 ns, 3 dB",
        overrides: joint!("[attack]\nkind = \"time_shift\"\ndelays_ns = [-1.0]\nprobabilities = [1.0]\n"),
    },
    Preset {
        name: "fig3e",
        description: "joint TGI, delay switching between +1.0 and -1.0 ns",
        overrides: joint!(
            "[attack]\nkind = \"time_shift\"\ndelays_ns = [1.0, -1.0]\nprobabilities = [0.5, 0.5]\n"
        ),
    },
    Preset {
        name: "fig3f",
        description: "joint TGI, delay switching between +0.3 and -0.3 ns",
        overrides: joint!(
            "[attack]\nkind = \"time_shift\"\ndelays_ns = [0.3, -0.3]\nprobabilities = [0.5, 0.5]\n"
        ),
    },
    Preset {
        name: "fig4a",
        description: "local TGI without QKD light, <I_tb> = 0.01",
        overrides: local4!(
            "[qkd]\nmu_a = 0.0\n[protocol]\nduty_joint = 0.0\nduty_local = 1.0\nrounds = 5000000\n"
        ),
    },
    Preset {
        name: "fig4b",
        description: "local TGI with QKD light over 3 dB",
        overrides: local4!(
            "[channel]\nloss_db = 3.0\n[protocol]\nduty_joint = 0.0\nduty_local = 0.8\nrounds = 6250000\n"
        ),
    },
    Preset {
        name: "fig4c",
        description: "local TGI with QKD light over 7 dB",
        overrides: local4!(
            "[channel]\nloss_db = 7.0\n[protocol]\nduty_joint = 0.0\nduty_local = 0.8\nrounds = 6250000\n"
        ),
    },
    Preset {
        name: "fig4d",
        description: "local TGI under full blinding, 3 dB",
        overrides: local4!(
            "[channel]\nloss_db = 3.0\n[attack]\nkind = \"blinding\"\nattack_prob = 1.0\n[protocol]\nduty_joint = 0.0\nduty_local = 1.0\nrounds = 5000000\n"
        ),
    },
    Preset {
        name: "fig4e",
        description: "differential image under full blinding, 3 dB",
        overrides: local4!(
            "[channel]\nloss_db = 3.0\n[attack]\nkind = \"blinding\"\nattack_prob = 1.0\n[protocol]\nduty_joint = 0.0\nduty_local = 1.0\nrounds = 5000000\n"
        ),
    },
    Preset {
        name: "fig4f",
        description: "differential image under full blinding, 7 dB",
        overrides: local4!(
            "[channel]\nloss_db = 7.0\n[attack]\nkind = \"blinding\"\nattack_prob = 1.0\n[protocol]\nduty_joint = 0.0\nduty_local = 1.0\nrounds = 5000000\n"
        ),
    },
    Preset {
        name: "fig5c1",
        description: "calibrated partial blinding, 7 dB, N = 5e6",
        overrides: local5!(
            "[channel]\nloss_db = 7.0\n[protocol]\nduty_joint = 0.0\nduty_local = 1.0\nrounds = 5000000\n"
        ),
    },
    Preset {
        name: "fig5c2",
        description: "calibrated partial blinding, 7 dB, N = 5e8",
        overrides: local5!(
            "[channel]\nloss_db = 7.0\n[protocol]\nduty_joint = 0.0\nduty_local = 1.0\nrounds = 500000000\n"
        ),
    },
    Preset {
        name: "fig5c4",
        description: "calibrated partial blinding, 20 dB, N = 5e9",
        overrides: local5!(
            "[channel]\nloss_db = 20.0\n[protocol]\nduty_joint = 0.0\nduty_local = 1.0\nrounds = 5000000000\n"
        ),
    },
    Preset {
        name: "fig5c4-surrogate",
        description: "calibrated partial blinding, 20 dB, <I_tb> = 0.2, N = 1e9",
        overrides: concat!(
            "[grid]\ndt_ns = 0.08\n",
            "[source]\nmode = \"uniform_bins\"\nlocal_tb_rate = 0.2\nref_bandwidth_ghz = \"inf\"\n",
            "[attack]\nkind = \"blinding\"\n",
            "[channel]\nloss_db = 20.0\n[protocol]\nduty_joint = 0.0\nduty_local = 1.0\nrounds = 1000000000\n"
        ),
    },
];

pub fn preset_table(name: &str) -> Result<toml::Table> {
    let preset = PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::config("preset", format!("unknown preset {name:?}; known: {}", known.join(", ")))
    })?;
    Ok(toml::from_str(preset.overrides).expect("preset overrides are valid TOML"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ExperimentConfig;

    #[test]
    fn every_preset_resolves_and_validates() {
        for p in PRESETS {
            let c = ExperimentConfig::preset(p.name).unwrap();
            c.validate().unwrap();
            assert_eq!(c.preset.as_deref(), Some(p.name));
        }
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        assert!(matches!(
            ExperimentConfig::preset("fig9z"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn lossy_preset_values() {
        let c = ExperimentConfig::preset("fig5c4").unwrap();
        assert_eq!(c.channel.loss_db, 20.0);
        assert_eq!(c.protocol.rounds, 5_000_000_000);
        assert!(c.source.ref_bandwidth_ghz.is_infinite());
    }
}
