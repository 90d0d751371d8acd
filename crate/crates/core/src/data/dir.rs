//! On-disk dataset layout: `<root>/<split>/<class>/<image>.png`.
//!
//! Class ids follow the sorted order of the class directory names and
//! images within a class are read in sorted file-name order.

use std::fs;
use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Loads one split (`train` or `test`) of an image-folder dataset.
pub fn load_split(root: &Path, split: &str) -> Result<Dataset> {
    let dir = root.join(split);
    let class_dirs: Vec<_> = sorted_entries(&dir)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no class directories", dir.display())));
    }
    let mut names = Vec::new();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut shape: Option<[usize; 3]> = None;
    for (label, cdir) in class_dirs.iter().enumerate() {
        names.push(cdir.file_name().unwrap().to_string_lossy().into_owned());
        for file in sorted_entries(cdir)? {
            if file.extension().and_then(|e| e.to_str()) != Some("png") {
                continue;
            }
            let img = image::open(&file)
                .map_err(|e| Error::InsufficientData(format!("{}: {e}", file.display())))?
                .to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            match shape {
                None => shape = Some([3, h, w]),
                Some(s) if s != [3, h, w] => {
                    return Err(Error::InputShape(format!(
                        "{} is {w}x{h}, expected {}x{}",
                        file.display(),
                        s[2],
                        s[1]
                    )))
                }
                _ => {}
            }
            for ch in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        images.push(img.get_pixel(x as u32, y as u32)[ch] as f32 / 255.0);
                    }
                }
            }
            labels.push(label);
        }
    }
    let shape = shape.ok_or_else(|| Error::InsufficientData(format!("{} has no images", dir.display())))?;
    Dataset::new(shape, names, images, labels)
}

/// Writes one split as PNG files.
pub fn export_split(ds: &Dataset, root: &Path, split: &str) -> Result<()> {
    let [c, h, w] = ds.shape();
    if c != 3 {
        return Err(Error::InputShape("only RGB datasets can be exported".into()));
    }
    let mut counters = vec![0usize; ds.num_classes()];
    for i in 0..ds.len() {
        let label = ds.labels()[i];
        let dir = root.join(split).join(&ds.class_names()[label]);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let px = ds.image(i);
        let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let p = y as usize * w + x as usize;
            image::Rgb([0, 1, 2].map(|ch| (px[ch * h * w + p] * 255.0).round().clamp(0.0, 255.0) as u8))
        });
        let path = dir.join(format!("{:05}.png", counters[label]));
        counters[label] += 1;
        img.save(&path)
            .map_err(|e| Error::io(&path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    }
    Ok(())
}
