use crate::eval::texture::{mucosa_texture, TextureParams};
use crate::image::Image;

pub use crate::eval::texture::noise_image;

pub fn blob_image(width: usize, height: usize, seed: u64) -> Image {
    mucosa_texture(width, height, seed, &TextureParams::default())
}
