//! Generic JSON-over-HTTP adapter for hosted chat-vision and image-edit APIs.
//!
//! Wire format (images are base64 PNG):
//! - `POST {url}/describe` `{"prompt", "images": [..]}` → `{"text"}`
//! - `POST {url}/edit` `{"prompt", "image", "aux_images": [..]}` → `{"image"}`
//!
//! The endpoint comes from `CHRONOLENS_BACKEND_<ID>_URL` and the optional bearer
//! token from `CHRONOLENS_BACKEND_<ID>_TOKEN`, where `<ID>` is the backend id
//! upper-cased with non-alphanumerics replaced by `_`.

use std::io::Cursor;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendDescriptor, BackendError};
use crate::scene_data::RgbFrame;

pub fn env_key(backend_id: &str, suffix: &str) -> String {
    let id: String = backend_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("CHRONOLENS_BACKEND_{id}_{suffix}")
}

pub fn encode_png(frame: &RgbFrame) -> Result<Vec<u8>, BackendError> {
    let img = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.pixels().to_vec())
        .ok_or_else(|| BackendError::BadResponse("frame buffer does not match its size".into()))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| BackendError::BadResponse(format!("png encode: {e}")))?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbFrame, BackendError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| BackendError::BadResponse(format!("png decode: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    RgbFrame::new(w as usize, h as usize, img.into_raw(), 0.0).map_err(|e| BackendError::BadResponse(e.to_string()))
}

#[derive(Serialize)]
struct DescribeBody<'a> {
    prompt: &'a str,
    images: Vec<String>,
}

#[derive(Deserialize)]
struct DescribeReply {
    text: String,
}

#[derive(Serialize)]
struct EditBody<'a> {
    prompt: &'a str,
    image: String,
    aux_images: Vec<String>,
}

#[derive(Deserialize)]
struct EditReply {
    image: String,
}

pub struct HttpBackend {
    descriptor: BackendDescriptor,
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(descriptor: BackendDescriptor, base_url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend {
            descriptor,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            agent,
        }
    }

    /// Reads URL and token from the environment.
    pub fn from_env(descriptor: BackendDescriptor, timeout: Duration) -> Result<Self, BackendError> {
        let url_key = env_key(&descriptor.backend_id, "URL");
        let url = std::env::var(&url_key)
            .map_err(|_| BackendError::Config(format!("{url_key} is not set for backend {}", descriptor.backend_id)))?;
        let token = std::env::var(env_key(&descriptor.backend_id, "TOKEN")).ok();
        Ok(Self::new(descriptor, url, token, timeout))
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R, BackendError> {
        let mut req = self.agent.post(format!("{}/{path}", self.base_url));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| BackendError::Transport(e.to_string()))?;
        resp.body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_json::<R>()
            .map_err(|e| BackendError::BadResponse(e.to_string()))
    }
}

impl Backend for HttpBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn describe(&self, images: &[RgbFrame], prompt: &str) -> Result<String, BackendError> {
        let images = images
            .iter()
            .map(|f| encode_png(f).map(|b| STANDARD.encode(b)))
            .collect::<Result<_, _>>()?;
        let reply: DescribeReply = self.post("describe", &DescribeBody { prompt, images })?;
        Ok(reply.text)
    }

    fn edit(&self, image: &RgbFrame, aux: &[RgbFrame], prompt: &str) -> Result<RgbFrame, BackendError> {
        let body = EditBody {
            prompt,
            image: STANDARD.encode(encode_png(image)?),
            aux_images: aux
                .iter()
                .map(|f| encode_png(f).map(|b| STANDARD.encode(b)))
                .collect::<Result<_, _>>()?,
        };
        let reply: EditReply = self.post("edit", &body)?;
        let bytes = STANDARD
            .decode(reply.image.as_bytes())
            .map_err(|e| BackendError::BadResponse(format!("base64: {e}")))?;
        decode_png(&bytes)
    }
}
