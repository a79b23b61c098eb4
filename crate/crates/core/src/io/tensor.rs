//! Motion-tensor wire format and the external denoiser that speaks it.
//!
//! One tensor is a 16-byte header (`"HOM1"` magic, joint count J, frame
//! count T, diffusion step, all u32 little-endian) followed by
//! `T x (3 + 6 + 3J)` f32 little-endian values in the standard flattening
//! order. The external denoiser spawns a child process per request, writes
//! the noised tensor to its stdin, and reads the predicted clean tensor
//! from its stdout; this attaches a real motion model without linking it.

use std::io::{Read, Write};
use std::process::{Command, Stdio};

use crate::distill::{DenoiseContext, Denoiser, DistillError, MotionShape};
use crate::Real;

pub const TENSOR_MAGIC: &[u8; 4] = b"HOM1";

/// Serializes one motion tensor.
pub fn write_motion_tensor<W: Write>(
    writer: &mut W,
    data: &[Real],
    shape: MotionShape,
    step: usize,
) -> std::io::Result<()> {
    assert_eq!(data.len(), shape.len(), "tensor length must match its shape");
    writer.write_all(TENSOR_MAGIC)?;
    writer.write_all(&(shape.joints as u32).to_le_bytes())?;
    writer.write_all(&(shape.frames as u32).to_le_bytes())?;
    writer.write_all(&(step as u32).to_le_bytes())?;
    for &v in data {
        writer.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Deserializes one motion tensor, returning `(data, shape, step)`.
pub fn read_motion_tensor<R: Read>(reader: &mut R) -> std::io::Result<(Vec<Real>, MotionShape, usize)> {
    let mut header = [0u8; 16];
    reader.read_exact(&mut header)?;
    if &header[..4] != TENSOR_MAGIC {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("bad motion tensor magic {:?}", &header[..4]),
        ));
    }
    let joints = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let step = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let shape = MotionShape { frames, joints };
    let mut payload = vec![0u8; shape.len() * 4];
    reader.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Real)
        .collect();
    Ok((data, shape, step))
}

/// Denoiser that shells out per prediction. The prompt and guidance scale
/// travel in the `HOI_PROMPT` and `HOI_GUIDANCE` environment variables so
/// the wire stays a pure tensor exchange (`cat` is a valid identity
/// denoiser).
pub struct ExternalDenoiser {
    pub command: Vec<String>,
}

impl Denoiser for ExternalDenoiser {
    fn predict_clean(&self, noised: &[Real], ctx: &DenoiseContext<'_>) -> Result<Vec<Real>, DistillError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| DistillError::External("empty command".to_string()))?;
        let mut child = Command::new(program)
            .args(args)
            .env("HOI_PROMPT", ctx.prompt)
            .env("HOI_GUIDANCE", ctx.guidance_scale.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| DistillError::External(format!("spawn '{program}': {e}")))?;

        let mut request = Vec::with_capacity(16 + noised.len() * 4);
        write_motion_tensor(&mut request, noised, ctx.shape, ctx.step)
            .expect("writing to a Vec cannot fail");
        child
            .stdin
            .take()
            .expect("stdin piped")
            .write_all(&request)
            .map_err(|e| DistillError::External(format!("write request: {e}")))?;

        let output = child
            .wait_with_output()
            .map_err(|e| DistillError::External(format!("wait: {e}")))?;
        if !output.status.success() {
            return Err(DistillError::External(format!(
                "exit status {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr)
            )));
        }
        let (data, shape, _step) = read_motion_tensor(&mut output.stdout.as_slice())
            .map_err(|e| DistillError::External(format!("read response: {e}")))?;
        if shape != ctx.shape {
            return Err(DistillError::ShapeMismatch {
                got: shape.len(),
                expected: ctx.shape.len(),
            });
        }
        Ok(data)
    }
}
