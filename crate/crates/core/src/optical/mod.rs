//! Optical engine: defocus blur, colour casts, exposure errors and
//! coverage artifacts (deposits, bubbles, knife lines).

mod color;
mod coverage;
mod defocus;
mod fft;
mod psf;

pub use color::{apply_color_cast, apply_exposure, ChannelGains};
pub use coverage::{apply_coverage, CoverageKind, CoverageParams, CoverageTemplate, Placement};
pub use defocus::{apply_defocus, DefocusParams, PreparedDefocus};
pub use psf::{make_defocus_psf, OpticalParams, PsfKernel, ENERGY_FRACTION};
