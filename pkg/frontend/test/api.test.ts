import { describe, expect, it, vi } from 'vitest';

import {
  ApiError,
  dataUrlToBase64,
  getHealth,
  submitCount,
  type FetchLike,
} from '../src/api.js';

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

describe('dataUrlToBase64', () => {
  it('strips the data-url prefix', () => {
    expect(dataUrlToBase64('data:image/png;base64,QUJD')).toBe('QUJD');
  });

  it('passes through raw base64', () => {
    expect(dataUrlToBase64('QUJD')).toBe('QUJD');
  });
});

describe('submitCount', () => {
  it('posts the JSON body and returns the parsed response', async () => {
    const payload = {
      count: 23.7,
      rounded_count: 24,
      window_counts: [23.7],
      density_shape: [96, 96],
      elapsed_ms: 12.5,
      model_id: 'm',
      prompt: 'the apples',
      overlay: 'UE5H',
    };
    const fetchFn = vi.fn<Parameters<FetchLike>, ReturnType<FetchLike>>(
      async () => jsonResponse(payload),
    );

    const result = await submitCount(fetchFn, 'http://svc', 'QUJD', 'the apples', {
      windowSide: 96,
      stride: 48,
    });
    expect(result).toEqual(payload);

    expect(fetchFn).toHaveBeenCalledOnce();
    const [url, init] = fetchFn.mock.calls[0];
    expect(url).toBe('http://svc/api/count');
    expect(init?.method).toBe('POST');
    const sent = JSON.parse(String(init?.body));
    expect(sent).toEqual({
      image_b64: 'QUJD',
      description: 'the apples',
      window_side: 96,
      stride: 48,
    });
  });

  it('raises ApiError with the machine-readable code', async () => {
    const fetchFn: FetchLike = async () =>
      jsonResponse({ code: 'missing_description', message: 'need a prompt' }, 400);
    const err = await submitCount(fetchFn, '', 'QUJD', 'x').catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.code).toBe('missing_description');
    expect(err.message).toBe('need a prompt');
  });

  it('tolerates non-JSON error bodies', async () => {
    const fetchFn: FetchLike = async () =>
      new Response('gateway exploded', { status: 502 });
    const err = await submitCount(fetchFn, '', 'QUJD', 'x').catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(502);
    expect(err.code).toBe('unknown_error');
  });
});

describe('getHealth', () => {
  it('fetches the health document', async () => {
    const fetchFn: FetchLike = async (url) => {
      expect(url).toBe('http://svc/api/health');
      return jsonResponse({ status: 'ok', model_loaded: true, requests_served: 3 });
    };
    const health = await getHealth(fetchFn, 'http://svc');
    expect(health.model_loaded).toBe(true);
  });
});
