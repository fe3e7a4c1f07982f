import { afterEach, describe, expect, it, vi } from 'vitest'

import { ApiClient, ApiError } from '../src/api.js'

function jsonResponse(payload: unknown, status = 200): Response {
  return {
    ok: status < 400,
    status,
    statusText: status === 200 ? 'OK' : 'Error',
    json: async () => payload,
  } as Response
}

afterEach(() => {
  vi.unstubAllGlobals()
})

describe('api client', () => {
  it('builds service paths and encodes group ids', async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ group: 'g' }))
    vi.stubGlobal('fetch', fetchMock)
    const client = new ApiClient('http://svc')
    await client.inspection('abc', 'gender=Female,insurance=Other')
    expect(fetchMock).toHaveBeenCalledWith(
      'http://svc/reports/abc/groups/gender%3DFemale%2Cinsurance%3DOther/inspection',
      { method: 'GET' },
    )
  })

  it('coalesces concurrent explains for the same group, code and direction', async () => {
    let release!: (value: Response) => void
    const gate = new Promise<Response>(resolve => { release = resolve })
    const fetchMock = vi.fn(() => gate)
    vi.stubGlobal('fetch', fetchMock)
    const client = new ApiClient()

    const first = client.explain('r', 'g', 'G11', 'over')
    const second = client.explain('r', 'g', 'G11', 'over')
    expect(second).toBe(first) // same in-flight promise
    expect(fetchMock).toHaveBeenCalledTimes(1)

    release(jsonResponse({ drivers: [] }))
    await expect(first).resolves.toEqual({ drivers: [] })

    // settled: a later call posts again
    await client.explain('r', 'g', 'G11', 'over')
    expect(fetchMock).toHaveBeenCalledTimes(2)
  })

  it('does not coalesce across different directions', async () => {
    const fetchMock = vi.fn(async () => jsonResponse({}))
    vi.stubGlobal('fetch', fetchMock)
    const client = new ApiClient()
    await Promise.all([
      client.explain('r', 'g', 'G11', 'over'),
      client.explain('r', 'g', 'G11', 'under'),
    ])
    expect(fetchMock).toHaveBeenCalledTimes(2)
  })

  it('surfaces the service error text verbatim', async () => {
    const message = 'black-box endpoint http://bb:9/predict refused the batch'
    vi.stubGlobal('fetch', vi.fn(async () => jsonResponse({ error: message }, 502)))
    const client = new ApiClient()
    const failure = client.explain('r', 'g', 'G11', 'over')
    await expect(failure).rejects.toThrowError(message)
    await failure.catch((err: ApiError) => {
      expect(err.status).toBe(502)
    })
  })

  it('falls back to the status line for non-JSON error bodies', async () => {
    vi.stubGlobal('fetch', vi.fn(async () => ({
      ok: false,
      status: 500,
      statusText: 'Internal Server Error',
      json: async () => { throw new SyntaxError('not json') },
    }) as unknown as Response))
    const client = new ApiClient()
    await expect(client.listReports()).rejects.toThrowError(
      '500 Internal Server Error',
    )
  })
})
